"""Built-in model families and brute-force oracles.

The two countable families carry their excursion law at the root together
with first-passage generating functions, so that every quantity needed for a
certified verdict is available in closed form or with integral-test tail
bounds:

* ``srw(p)``: nearest-neighbour walk on ℤ, ``A(x, x+1) = p``,
  ``A(x, x-1) = 1 - p``, period 2, R-null-recurrent for every ``p``.
* ``pinning(α, γ, β)``: age chain on ℕ₀ with ``A(n, n+1) = 1`` and
  ``A(n, 0) = β K(n+1)``, ``K(m) = m^{-α} e^{-γm} / Z``.

``birth_death`` has no excursion law attached and exercises the
truncation-only code paths.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

from .core import SparseNonnegMatrix, StateGenerator, Subgraph, strongly_connected_labels
from .exceptions import BadParameter, LimitExceeded, ParseError, PreconditionError, UnsupportedPerturbation
from .logmgf import INF, CatalanMeasure, PowerExpMeasure, ReweightedMeasure, moment_bracket

__all__ = [
    "ModelSpec",
    "srw",
    "pinning",
    "pinning_beta_c",
    "birth_death",
    "finite_random",
    "enumerate_excursions",
    "excursion_tail_bound",
    "dense_power_diag",
    "model_from_spec",
]

# relative half-width attached to closed-form values
_CF_EPS = 1e-14


def _pm(v):
    if v == INF:
        return (INF, INF)
    return (v * (1 - _CF_EPS), v * (1 + _CF_EPS))


# ---------------------------------------------------------------- srw


def _z_state(i: int) -> str:
    return str((i + 1) // 2 if i % 2 else -(i // 2))


def _z_index(x) -> int:
    x = int(x)
    return 2 * x - 1 if x > 0 else -2 * x


def srw(p: float) -> StateGenerator:
    """Nearest-neighbour walk on ℤ with up-probability ``p``.

    States are enumerated ``0, 1, -1, 2, -2, ...``. The excursion law at 0
    is ``μ(2n) = 2 C_{n-1} (pq)^n`` and first passages over ``|x|`` levels
    have generating function ``F^{|x|}`` with
    ``F_down = (1 - sqrt(1 - 4pq e^{2λ})) / (2p e^λ)``.

    Raises
    ------
    BadParameter
        Unless ``0 < p < 1``.
    """
    p = float(p)
    if not 0 < p < 1:
        raise BadParameter(f"need 0 < p < 1, got {p}")
    return _srw_gen(p, {})


_SRW_EDGES = {("0", "1"), ("1", "0"), ("0", "-1"), ("-1", "0")}


def _srw_gen(p, ratios):
    q = 1.0 - p
    r = {e: ratios.get(e, 1.0) for e in _SRW_EDGES}
    scale = 0.5 * (r[("0", "1")] * r[("1", "0")] + r[("0", "-1")] * r[("-1", "0")])
    mu = CatalanMeasure(p, scale)

    def row_fn(x):
        xi = int(x)
        up, dn = str(xi + 1), str(xi - 1)
        return [(up, p * r.get((x, up), 1.0)), (dn, q * r.get((x, dn), 1.0))]

    def passage(lam):
        # generating functions of one level down / up, or inf beyond λ_+
        u = math.exp(2.0 * (lam - mu.lambda_plus))
        if u > 1:
            return INF, INF
        num = -math.expm1(0.5 * math.log1p(-u)) if u < 1 else 1.0
        t = math.exp(lam)
        return num / (2 * p * t), num / (2 * q * t)

    def hitting_gf(x, lam):
        xi = int(x)
        if xi == 0:
            raise PreconditionError("hitting function is defined off the root")
        fd, fu = passage(lam)
        if fd == INF:
            return (INF, INF)
        if xi > 0:
            v = fd**xi * r[("1", "0")]
        else:
            v = fu ** (-xi) * r[("-1", "0")]
        return _pm(v)

    green_fn = None
    if not ratios:
        def green_fn(x, y, lam):
            b = moment_bracket(mu, lam)
            if b.hi >= 0:
                return (INF, INF)
            g00 = 1.0 / -math.expm1(b.mid)
            fd, fu = passage(lam)
            d = int(y) - int(x)
            f = 1.0 if d == 0 else (fu**d if d > 0 else fd ** (-d))
            return _pm(f * g00)

    def perturber(new):
        bad = [e for e in new if e not in _SRW_EDGES]
        if bad:
            raise UnsupportedPerturbation(f"srw supports changes on edges at 0 only, got {bad}")
        merged = dict(ratios)
        for e, v in new.items():
            if not v > 0:
                raise PreconditionError("ratios must be positive (support is preserved)")
            merged[e] = merged.get(e, 1.0) * v
        return _srw_gen(p, merged)

    return StateGenerator(
        row_fn=row_fn, state_of=_z_state, index_of=_z_index, root="0", measure=mu,
        hitting_gf=hitting_gf, green_fn=green_fn, perturber=perturber, period=2,
        name="srw", params={"p": p},
    )


# ---------------------------------------------------------------- pinning


def _zeta_parts(alpha, gamma):
    with mpmath.workdps(30):
        Z = float(mpmath.polylog(alpha, mpmath.e ** (-gamma)))
        zeta = float(mpmath.zeta(alpha))
    return Z, zeta


def pinning_beta_c(alpha: float, gamma: float) -> float:
    """Critical strength ``β_c = Z / ζ(α)`` with ``Z = Σ m^{-α} e^{-γm}``."""
    if not alpha > 1:
        raise BadParameter(f"need alpha > 1, got {alpha}")
    if not gamma > 0:
        raise BadParameter(f"need gamma > 0, got {gamma}")
    Z, zeta = _zeta_parts(alpha, gamma)
    return Z / zeta


def pinning(alpha: float, gamma: float, beta: float) -> StateGenerator:
    """Age chain of a pinning model.

    ``A(n, n+1) = 1`` and ``A(n, 0) = β K(n+1)``. The excursion law at 0 is
    ``μ(m) = (β/Z) m^{-α} e^{-γm}`` with ``λ_+ = γ`` and
    ``φ_0(γ) = β/β_c``. ``params`` records ``beta_c``.

    Raises
    ------
    BadParameter
    """
    alpha, gamma, beta = float(alpha), float(gamma), float(beta)
    if not alpha > 1:
        raise BadParameter(f"need alpha > 1, got {alpha}")
    if not gamma > 0:
        raise BadParameter(f"need gamma > 0, got {gamma}")
    if not beta > 0:
        raise BadParameter(f"need beta > 0, got {beta}")
    Z, zeta = _zeta_parts(alpha, gamma)
    return _age_gen(alpha, gamma, beta, Z, Z / zeta, {}, {})


def _age_gen(alpha, gamma, beta, Z, beta_c, r_up, r_ret):
    base = PowerExpMeasure(beta / Z, alpha, gamma)
    cut = max([k + 2 for k in r_up] + [k + 1 for k in r_ret], default=0)
    tail_factor = math.prod(r_up.values())

    def up_prod(a, b):
        # Π_{a <= k < b} r_up(k)
        return math.prod(v for k, v in r_up.items() if a <= k < b)

    if cut:
        head = {m: r_ret.get(m - 1, 1.0) * up_prod(0, m - 1) for m in range(1, cut + 1)}
        mu = ReweightedMeasure(base, head, tail_factor)
    else:
        mu = base

    def row_fn(x):
        n = int(x)
        ret = beta * math.exp(-alpha * math.log(n + 1) - gamma * (n + 1)) / Z
        return [(str(n + 1), r_up.get(n, 1.0)), ("0", ret * r_ret.get(n, 1.0))]

    @lru_cache(maxsize=4096)
    def hitting_gf(x, lam):
        n = int(x)
        if n <= 0:
            raise PreconditionError("hitting function is defined off the root")
        b = moment_bracket(mu, lam, 0, start=n + 1)
        lp = math.log(up_prod(0, n)) if r_up else 0.0
        return (_exp(b.lo - lam * n - lp), _exp(b.hi - lam * n - lp))

    def green_fn(x, y, lam):
        nx, ny = int(x), int(y)
        b = moment_bracket(mu, lam)
        if b.hi >= 0:
            return (INF, INF)
        glo, ghi = 1.0 / -math.expm1(b.lo), 1.0 / -math.expm1(b.hi)
        climb = math.exp(lam * ny) * up_prod(0, ny)
        if nx == 0:
            return (glo * climb, ghi * climb)
        hlo, hhi = hitting_gf(str(nx), lam)
        direct = math.exp(lam * (ny - nx)) * up_prod(nx, ny) if ny >= nx else 0.0
        return (direct + hlo * glo * climb, direct + hhi * ghi * climb)

    def perturber(new):
        up, ret = dict(r_up), dict(r_ret)
        for (x, y), v in new.items():
            if not v > 0:
                raise PreconditionError("ratios must be positive (support is preserved)")
            try:
                nx, ny = int(x), int(y)
            except ValueError:
                raise UnsupportedPerturbation(f"({x}, {y}) is not an edge") from None
            if ny == nx + 1 and nx >= 0:
                up[nx] = up.get(nx, 1.0) * v
            elif ny == 0 and nx >= 0:
                ret[nx] = ret.get(nx, 1.0) * v
            else:
                raise UnsupportedPerturbation(f"({x}, {y}) is not an edge of the age chain")
        return _age_gen(alpha, gamma, beta, Z, beta_c, up, ret)

    return StateGenerator(
        row_fn=row_fn, state_of=str, index_of=int, root="0", measure=mu,
        hitting_gf=hitting_gf, green_fn=green_fn, perturber=perturber, period=1,
        name="pinning", params={"alpha": alpha, "gamma": gamma, "beta": beta, "beta_c": beta_c, "Z": Z},
    )


def _exp(v):
    return INF if v == INF else math.exp(v)


# ---------------------------------------------------------------- birth-death


def birth_death(up: float, down: float, stay0: float = 1.0) -> StateGenerator:
    """Walk on ℕ₀ with ``A(n, n+1) = up``, ``A(n, n-1) = down``, ``A(0, 0) = stay0``.

    No excursion law is attached: analyses run on truncations and report
    lower bounds only.
    """
    up, down, stay0 = float(up), float(down), float(stay0)
    if not (up > 0 and down > 0 and stay0 > 0):
        raise BadParameter("rates must be positive")

    def row_fn(x):
        n = int(x)
        out = [(str(n + 1), up)]
        out.append((str(n - 1), down) if n > 0 else ("0", stay0))
        return out

    return StateGenerator(row_fn=row_fn, state_of=str, index_of=int, root="0", period=1,
                          name="birth_death", params={"up": up, "down": down, "stay0": stay0})


# ---------------------------------------------------------------- finite


def finite_random(seed: int, size: int, density: float = 0.5, max_tries: int = 100) -> SparseNonnegMatrix:
    """Reproducible irreducible random matrix with weights in ``(0, 1]``.

    The support is resampled until strongly connected; after ``max_tries``
    failures a Hamiltonian cycle is added. States are ``"0" ... "size-1"``.
    """
    if size < 1:
        raise BadParameter("size must be >= 1")
    if not 0 < density <= 1:
        raise BadParameter("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        mask = rng.random((size, size)) < density
        r, c = np.nonzero(mask)
        if r.size and len(set(strongly_connected_labels(size, r, c).tolist())) == 1:
            break
    else:
        idx = np.arange(size)
        mask[idx, (idx + 1) % size] = True
    w = 1.0 - rng.random((size, size))
    entries = {(str(i), str(j)): float(w[i, j]) for i, j in zip(*np.nonzero(mask))}
    return SparseNonnegMatrix([str(i) for i in range(size)], entries)


# ---------------------------------------------------------------- oracles


def _excursion_blocks(A: SparseNonnegMatrix, F: Subgraph, x, y):
    x, y = str(x), str(y)
    for v in (x, y):
        if v not in F.vertices:
            raise PreconditionError(f"{v} is not a vertex of F")
    interior = [s for s in A.states if s not in F.vertices]
    ii = [A.index[s] for s in interior]
    D = A._dense
    a = D[A.index[x], ii]
    b = D[ii, A.index[y]]
    B = D[np.ix_(ii, ii)]
    direct = 0.0 if (x, y) in F.edges else float(D[A.index[x], A.index[y]])
    return direct, a, B, b


def enumerate_excursions(A: SparseNonnegMatrix, F: Subgraph, x, y, max_len: int, limit: int = 20):
    """Total weight of excursions from ``x`` to ``y`` away from ``F``, per length.

    Walks of length ``ℓ >= 2`` run through vertices outside ``F`` only; the
    length-one walk counts unless it is an edge of ``F``. Weights are
    accumulated by dynamic programming over the interior block, which gives
    the same sums as listing the walks one by one.

    Returns
    -------
    list of (int, float)
        ``(ℓ, weight)`` for ``ℓ = 1 .. max_len``.

    Raises
    ------
    LimitExceeded
        If ``max_len > limit``.
    """
    if max_len > limit:
        raise LimitExceeded(f"max_len {max_len} exceeds {limit}")
    direct, a, B, b = _excursion_blocks(A, F, x, y)
    out = [(1, direct)]
    v = a
    for ell in range(2, max_len + 1):
        out.append((ell, float(v @ b)))
        v = v @ B
    return out


def excursion_tail_bound(A: SparseNonnegMatrix, F: Subgraph, x, y, lam: float, max_len: int) -> float:
    """Certified upper bound on ``Σ_{ℓ > max_len} w_ℓ e^{λℓ}``.

    With ``v > 0`` and ``c = max_i (Bv)_i / v_i`` (Collatz–Wielandt) one has
    ``a B^k b <= (max b/v) (a·v) c^k``, a geometric series in ``e^λ c``.
    """
    _, a, B, b = _excursion_blocks(A, F, x, y)
    if a.size == 0 or not a.any() or not b.any():
        return 0.0
    n = B.shape[0]
    scale = B.max(initial=0.0) or 1.0
    best = INF
    # any v > 0 is valid; smoothing B by δJ trades a larger c for a better-conditioned v
    for delta in (1e-1, 1e-2, 1e-3, 1e-6):
        M = B + delta * scale * np.ones((n, n))
        v = np.ones(n)
        for _ in range(200):
            v = M @ v
            v /= v.max()
        c = float(np.max((B @ v) / v))
        t = math.exp(lam) * c
        if t >= 1:
            continue
        K = float(np.max(b / v)) * float(a @ v)
        best = min(best, K * math.exp(2 * lam) * t ** (max_len - 1) / (1 - t))
    return best


def dense_power_diag(A: SparseNonnegMatrix, x, n: int) -> float:
    """``A^n(x,x)`` by repeated squaring with rescaling.

    Raises
    ------
    LimitExceeded
        If ``n > 2**20``.
    """
    if n > 1 << 20:
        raise LimitExceeded("n must be <= 2**20")
    if n < 0:
        raise PreconditionError("n must be >= 0")
    i = A.index[str(x)]
    if n == 0:
        return 1.0
    R, rs = None, 0.0
    P, ps = A._dense.copy(), 0.0
    k = n
    while k:
        if k & 1:
            if R is None:
                R, rs = P.copy(), ps
            else:
                R = R @ P
                rs += ps
                m = R.max()
                if m == 0:
                    return 0.0
                R /= m
                rs += math.log(m)
        k >>= 1
        if k:
            P = P @ P
            ps *= 2
            m = P.max()
            if m == 0:
                return 0.0
            P /= m
            ps += math.log(m)
    d = R[i, i]
    return 0.0 if d == 0 else math.exp(math.log(d) + rs)


# ---------------------------------------------------------------- specs


_FAMILIES = {
    "srw": {"p"},
    "pinning": {"alpha", "gamma", "beta", "beta_factor"},
    "finite_random": {"seed", "size", "density"},
    "birth_death": {"up", "down", "stay0"},
}


@dataclass(frozen=True)
class ModelSpec:
    """Family tag plus parameters, as read from ``{"family": ..., **params}``.

    For ``pinning`` either ``beta`` or ``beta_factor`` (a multiple of
    ``β_c``) may be given.
    """

    family: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, text) -> "ModelSpec":
        if isinstance(text, (str, bytes)):
            try:
                d = json.loads(text)
            except json.JSONDecodeError as e:
                raise ParseError(f"model spec is not valid JSON: {e}") from None
        else:
            d = dict(text)
        if not isinstance(d, dict) or "family" not in d:
            raise ParseError('model spec needs a "family" field')
        fam = d.pop("family")
        if fam not in _FAMILIES:
            raise ParseError(f"unknown family {fam!r}")
        extra = set(d) - _FAMILIES[fam]
        if extra:
            raise ParseError(f"unknown parameters for {fam}: {sorted(extra)}")
        for k, v in d.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParseError(f"parameter {k} must be a number")
        return cls(fam, d)

    def to_json(self) -> str:
        return json.dumps({"family": self.family, **self.params}, sort_keys=True)

    def build(self):
        p = self.params
        try:
            if self.family == "srw":
                return srw(p["p"])
            if self.family == "pinning":
                if ("beta" in p) == ("beta_factor" in p):
                    raise ParseError("pinning needs exactly one of beta, beta_factor")
                beta = p["beta"] if "beta" in p else p["beta_factor"] * pinning_beta_c(p["alpha"], p["gamma"])
                return pinning(p["alpha"], p["gamma"], beta)
            if self.family == "finite_random":
                seed, size = p["seed"], p["size"]
                if int(seed) != seed or int(size) != size:
                    raise BadParameter("seed and size must be integers")
                return finite_random(int(seed), int(size), p.get("density", 0.5))
            return birth_death(p["up"], p["down"], p.get("stay0", 1.0))
        except KeyError as e:
            raise ParseError(f"missing parameter {e.args[0]} for {self.family}") from None


def model_from_spec(spec):
    """Build a generator or matrix from a JSON string or mapping."""
    return ModelSpec.from_json(spec).build()
