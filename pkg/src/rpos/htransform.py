"""Eigenfunctions, Doob transforms, excessive functions and Lyapunov certificates.

An R-recurrent ``A`` with Perron–Frobenius pair ``(h, c)`` is turned into the
probability kernel ``P(x, y) = A(x, y) h(y) / (c h(x))``. Strong positive
recurrence of ``P`` is certified by a drift function ``f`` with
``Pf <= (1 - ε) f`` off a finite set; the construction halves one entry of
``P`` and uses a Green function of the reduced kernel. Simulation of return
times and the decay of ``|P^n(x,x) - π(x)|`` provide diagnostics only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from .classify import R_TRANSIENT, UNDECIDED, classify
from .core import SparseNonnegMatrix, StateGenerator
from .exceptions import (
    Divergent,
    InequalityFails,
    NoConvergence,
    NotEigenpair,
    NotRTransient,
    NotStronglyPositiveRecurrent,
    PreconditionError,
    RowSumViolation,
    WindowTooSmall,
)
from .logmgf import INF, ShiftedMeasure, moment_bracket, psi_bracket
from .models import dense_power_diag
from .spectral import green, rho_bisect

__all__ = [
    "Eigenpair",
    "ProbKernel",
    "LyapunovCertificate",
    "ErgodicityFit",
    "pf_eigenpair",
    "doob_transform",
    "excessive_function",
    "strictly_excessive",
    "lyapunov_certificate",
    "verify_certificate",
    "simulate_returns",
    "label_key",
]


def label_key(s: str):
    """Sort key ordering integer labels numerically and others lexicographically."""
    try:
        return (0, int(s), "")
    except ValueError:
        return (1, 0, s)


# ---------------------------------------------------------------- eigenpairs


@dataclass(frozen=True)
class Eigenpair:
    """``Ah = c h`` with ``h`` normalised to 1 at the first state."""

    h: dict
    c: float
    residual: float
    iterations: int


def pf_eigenpair(A: SparseNonnegMatrix, tol: float = 1e-12, max_iter: int = 200_000,
                 start: Optional[np.ndarray] = None) -> Eigenpair:
    """Perron–Frobenius eigenpair by power iteration.

    Blocks of ``d = period`` iterates are averaged,
    ``h = Σ_{j<d} A^j v / s^j`` with ``s`` the geometric mean growth over
    the block, which removes the rotation on periodic supports.

    Raises
    ------
    NoConvergence
        If ``‖Ah - ch‖ / ‖h‖ > tol`` after ``max_iter`` multiplications.
    """
    M = A._dense
    d = A.period
    v = np.ones(A.n) if start is None else np.asarray(start, dtype=float).copy()
    if v.shape != (A.n,) or np.any(v <= 0):
        raise PreconditionError("start must be a positive vector of matching size")
    v /= v.max()
    it = 0
    res = INF
    while it < max_iter:
        ws = [v]
        for _ in range(d):
            ws.append(M @ ws[-1])
        it += d
        s = (ws[-1].max() / ws[0].max()) ** (1.0 / d)
        h = sum(w / s**j for j, w in enumerate(ws[:-1]))
        h = h / h[0] if h[0] > 0 else h / h.max()
        Ah = M @ h
        c = float(Ah.sum() / h.sum())
        res = float(np.max(np.abs(Ah - c * h)) / np.max(np.abs(h)))
        if res <= tol and np.all(h > 0):
            return Eigenpair({s_: float(h[A.index[s_]]) for s_ in A.states}, c, res, it)
        v = ws[-1] / ws[-1].max()
    raise NoConvergence(f"power iteration did not reach {tol:g} (residual {res:g})")


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True)
class ProbKernel:
    """Probability kernel obtained from ``A`` by a Doob transform.

    ``kernel`` is a finite matrix or a generator; ``pi`` the stationary law
    (all states for finite kernels, the root only for generators) or
    ``None`` when not positive recurrent; ``lam_star`` is ``-log c``.
    ``power_check`` maps ``n`` to the relative error of
    ``P^n(x,x) c^n = A^n(x,x)`` (maximum over ``x``).
    """

    kernel: Union[SparseNonnegMatrix, StateGenerator]
    h: Union[dict, Callable]
    c: float
    lam_star: float
    pi: Optional[dict] = None
    power_check: dict = field(default_factory=dict)

    @property
    def is_finite(self) -> bool:
        return isinstance(self.kernel, SparseNonnegMatrix)

    def row(self, x):
        if self.is_finite:
            return self.kernel.successors(x)
        return self.kernel.row(x)


def _stationary(P: SparseNonnegMatrix) -> dict:
    n = P.n
    M = np.vstack([P._dense.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return {s: float(pi[P.index[s]]) for s in P.states}


def _conjugate(gen: StateGenerator, lam: float, h: Callable, name: str) -> StateGenerator:
    """Generator with entries ``e^λ A(x,y) h(y) / h(x)``; ``h(root) = 1`` is assumed."""
    t = math.exp(lam)
    root = gen.root

    def row_fn(x):
        hx = h(x)
        return [(y, t * w * h(y) / hx) for y, w in gen.row(x)]

    mu = None if gen.measure is None else ShiftedMeasure(gen.measure, lam)

    hitting = None
    if gen.hitting_gf is not None:
        def hitting(x, s):
            lo, hi = gen.hitting_gf(x, s + lam)
            hx = h(x)
            return (lo / hx, hi / hx)

    green_fn = None
    if gen.green_fn is not None:
        def green_fn(x, y, s):
            lo, hi = gen.green_fn(x, y, s + lam)
            r = h(y) / h(x)
            return (lo * r, hi * r)

    perturber = None
    if gen.perturber is not None:
        def perturber(ratios):
            return _conjugate(gen.perturb(ratios), lam, h, name)

    return StateGenerator(
        row_fn=row_fn, state_of=gen.state_of, index_of=gen.index_of, root=root, measure=mu,
        hitting_gf=hitting, green_fn=green_fn, perturber=perturber, period=gen.period, name=name,
        params=dict(gen.params, transform_lambda=lam),
    )


def doob_transform(A, h=None, c=None, tol: float = 1e-10, row_tol: float = 1e-8,
                   eq_tol: float = 1e-9) -> ProbKernel:
    """Doob transform ``P(x,y) = A(x,y) h(y) / (c h(x))``.

    For finite matrices ``(h, c)`` defaults to the Perron–Frobenius pair; the
    pair is checked (``‖Ah - ch‖ <= tol ‖h‖``), row sums are checked
    against ``row_tol`` and then normalised exactly. For generators ``A``
    must be R-recurrent with an excursion law; ``h`` is the first-passage
    generating function to the root at ``λ_*``.

    Raises
    ------
    NotEigenpair, RowSumViolation
    """
    if isinstance(A, SparseNonnegMatrix):
        if h is None:
            ep = pf_eigenpair(A)
            h, c = ep.h, ep.c
        if c is None or not c > 0:
            raise PreconditionError("c must be positive")
        hv = np.array([float(h[s]) for s in A.states])
        if np.any(hv <= 0):
            raise NotEigenpair("h must be positive")
        Ah = A._dense @ hv
        res = float(np.max(np.abs(Ah - c * hv)) / np.max(hv))
        if res > tol:
            raise NotEigenpair(f"residual {res:g} exceeds {tol:g}")
        raw = {(x, y): w * h[y] / (c * h[x]) for (x, y), w in A.entries.items()}
        sums = {s: 0.0 for s in A.states}
        for (x, _), w in raw.items():
            sums[x] += w
        bad = {s: v for s, v in sums.items() if abs(v - 1) > row_tol}
        if bad:
            raise RowSumViolation(f"row sums off by more than {row_tol:g}: {bad}")
        P = SparseNonnegMatrix(A.states, {(x, y): w / sums[x] for (x, y), w in raw.items()})
        pi = _stationary(P)
        check = {}
        for n in range(1, 11):
            err = 0.0
            for s in A.states:
                a = dense_power_diag(A, s, n)
                p = dense_power_diag(P, s, n) * c**n
                if a > 0 or p > 0:
                    err = max(err, abs(p - a) / max(a, p))
            check[n] = err
        return ProbKernel(P, dict(h), float(c), -math.log(c), pi, check)

    if A.measure is None or A.hitting_gf is None:
        raise PreconditionError("generator needs an excursion law and hitting functions")
    # the kernel's row sums inherit the error in λ_*, so resolve it to rounding level
    cl = classify(A, tol=1e-15)
    if cl.verdict in (R_TRANSIENT, UNDECIDED):
        raise NotEigenpair(f"A is {cl.verdict}: no positive eigenfunction with eigenvalue rho")
    a, b = cl.lambda_star
    lam = 0.5 * (a + b)
    root = A.root

    @lru_cache(maxsize=None)
    def hfun(x):
        if x == root:
            return 1.0
        lo, hi = A.hitting_gf(x, lam)
        return math.sqrt(lo * hi)

    P = _conjugate(A, lam, hfun, f"doob({A.name})")
    mean = moment_bracket(A.measure, lam, 1)
    norm = psi_bracket(A.measure, lam)
    pi = None
    if mean.hi < INF:
        pi = {root: math.exp(-(0.5 * (mean.lo + mean.hi) - 0.5 * (norm.lo + norm.hi)))}
    return ProbKernel(P, hfun, math.exp(-lam), lam, pi, {})


# ---------------------------------------------------------------- excessive functions


def _window_states(gen: StateGenerator, window: int):
    return [str(gen.state_of(i)) for i in range(window)]


def excessive_function(A, z, lam: float, window: int = 50, rtol: float = 1e-10) -> dict:
    """``h(x) = G_λ(x, z)``, which satisfies ``Ah = e^{-λ}(h - 1_z)``.

    For finite matrices ``h`` is returned on all states; for generators on
    the first ``window`` states and their successors. The identity is
    checked on the evaluation window.

    Raises
    ------
    Divergent
        If ``G_λ(·, z)`` is infinite.
    InequalityFails
        If the identity fails beyond ``rtol``.
    """
    z = str(z)
    if isinstance(A, SparseNonnegMatrix):
        states = list(A.states)
        vals = {x: green(A, lam, x, z) for x in states}
        rows = {x: A.successors(x) for x in states}
    else:
        states = _window_states(A, window)
        rows = {x: A.row(x) for x in states}
        need = set(states) | {y for r in rows.values() for y, _ in r}
        vals = {x: green(A, lam, x, z) for x in need}
    for x, g in vals.items():
        if not g.finite:
            raise Divergent(f"G_lambda({x}, {z}) is infinite at lambda={lam}")
    h = {x: g.value for x, g in vals.items()}
    e = math.exp(-lam)
    for x in states:
        Ah = sum(w * h[y] for y, w in rows[x])
        rhs = e * (h[x] - (1.0 if x == z else 0.0))
        if abs(Ah - rhs) > rtol * max(abs(rhs), e * h[x]):
            raise InequalityFails(f"(Ah)({x}) = {Ah!r} but e^-lam (h - 1_z)({x}) = {rhs!r}", x)
    return h


def strictly_excessive(A, S_prime, window: int = 50) -> dict:
    """``h = Σ_{z ∈ S'} G_{λ_*}(·, z)``: ``Ah <= ρ h`` everywhere, strictly on ``S'``.

    Raises
    ------
    NotRTransient
        Unless ``A`` is certified R-transient.
    """
    cl = classify(A)
    if cl.verdict != R_TRANSIENT or not cl.certified:
        raise NotRTransient(f"A is {cl.verdict}")
    S_prime = sorted({str(s) for s in S_prime}, key=label_key)
    if not S_prime:
        raise PreconditionError("S' must be nonempty")
    lam = cl.lambda_star[0]
    parts = [excessive_function(A, z, lam, window) for z in S_prime]
    keys = set.intersection(*(set(p) for p in parts))
    h = {x: sum(p[x] for p in parts) for x in keys}
    rho = math.exp(-lam)
    states = list(A.states) if isinstance(A, SparseNonnegMatrix) else _window_states(A, window)
    for x in states:
        row = A.successors(x) if isinstance(A, SparseNonnegMatrix) else A.row(x)
        Ah = sum(w * h[y] for y, w in row)
        if Ah > rho * h[x] * (1 + 1e-12) or (x in S_prime and not Ah < rho * h[x]):
            raise InequalityFails(f"strict excessiveness fails at {x}", x)
    return h


# ---------------------------------------------------------------- certificates


@dataclass(frozen=True)
class LyapunovCertificate:
    """``Pf(x) <= (1 - ε) f(x)`` for window states ``x ∉ S'`` and ``Pf < inf`` on ``S'``.

    ``f`` is stored on the window and its successors; ``(x0, y0)`` is the
    halved entry and ``rho_Q`` the bracket of the reduced kernel's radius.
    """

    f: dict
    eps: float
    S_prime: tuple
    window: tuple
    x0: str
    y0: str
    lam: float
    rho_Q: tuple
    margin: float


# fraction of the gap 1 - ρ(Q) given up to keep the Green function well conditioned
_INSET = 1e-3


def _kernel_of(P):
    return P.kernel if isinstance(P, ProbKernel) else P


def lyapunov_certificate(P, S_prime, window: int = 50, margin: float = 0.1,
                         tol: float = 1e-10) -> LyapunovCertificate:
    """Drift certificate of strong positive recurrence.

    The entry ``(x0, y0)`` (smallest labels: ``x0`` in ``S'``, ``y0`` among
    its successors) is halved to give ``Q``. With ``e^{-λ}`` just above the
    upper end of the ``ρ(Q)`` bracket, ``f = G^Q_λ(·, x0)`` satisfies
    ``Pf = Qf <= e^{-λ} f`` off ``x0``, and ``ε = (1 - margin)(1 - e^{-λ})``.

    Raises
    ------
    NotStronglyPositiveRecurrent
        If ``ρ(Q) < 1`` cannot be certified.
    WindowTooSmall
        If ``S'`` does not fit in the window.
    """
    K = _kernel_of(P)
    if not 0 <= margin < 1:
        raise PreconditionError("margin must lie in [0, 1)")
    S_prime = tuple(sorted({str(s) for s in S_prime}, key=label_key))
    if not S_prime:
        raise PreconditionError("S' must be nonempty")
    finite = isinstance(K, SparseNonnegMatrix)
    if finite:
        sums = K.row_sums()
        bad = [s for s, v in sums.items() if abs(v - 1) > 1e-12]
        if bad:
            raise RowSumViolation(f"not a probability kernel at {bad[:5]}")
        states = list(K.states)
    else:
        states = _window_states(K, window)
    missing = [s for s in S_prime if s not in states]
    if missing:
        raise WindowTooSmall(f"S' states {missing} lie outside the window")
    x0 = S_prime[0]
    row = K.successors(x0) if finite else K.row(x0)
    y0 = min((y for y, _ in row), key=label_key)
    if finite:
        Q = K.replace({(x0, y0): 0.5 * K.entries[(x0, y0)]})
    else:
        if x0 != K.root:
            raise PreconditionError("for generators S' must contain the root as its smallest label")
        Q = K.perturb({(x0, y0): 0.5})
    est = rho_bisect(Q, x0, tol)
    if not est.upper < 1:
        raise NotStronglyPositiveRecurrent(f"rho(Q) bracket [{est.lower:.17g}, {est.upper:.17g}] does not exclude 1")
    # step slightly inside the convergence region so that G^Q is well conditioned
    c = est.upper + _INSET * (1.0 - est.upper)
    lam = -math.log(c)
    if finite:
        need = states
    else:
        need = sorted(set(states) | {y for x in states for y, _ in K.row(x)}, key=label_key)
    f = {}
    for x in need:
        g = green(Q, lam, x, x0)
        if not g.finite:
            raise NotStronglyPositiveRecurrent(f"G^Q diverges at {x}")
        f[x] = g.value
    eps = (1.0 - margin) * (1.0 - c)
    cert = LyapunovCertificate(f, eps, S_prime, tuple(states), x0, y0, lam, (est.lower, est.upper), margin)
    if not verify_certificate(P, cert):
        raise NotStronglyPositiveRecurrent("certificate failed verification")
    return cert


def verify_certificate(P, cert: LyapunovCertificate, rtol: float = 1e-12) -> bool:
    """Re-check the drift inequality directly from the rows of ``P``."""
    K = _kernel_of(P)
    finite = isinstance(K, SparseNonnegMatrix)
    if not 0 < cert.eps < 1:
        return False
    for x in cert.window:
        row = K.successors(x) if finite else K.row(x)
        try:
            Pf = math.fsum(w * cert.f[y] for y, w in row)
        except KeyError:
            return False
        if not math.isfinite(Pf):
            return False
        if x in cert.S_prime:
            continue
        if Pf > (1.0 - cert.eps) * cert.f[x] * (1 + rtol):
            return False
    return True


# ---------------------------------------------------------------- simulation


@dataclass(frozen=True)
class ErgodicityFit:
    """Return-time samples and decay-rate diagnostics (never a certificate).

    ``moments`` maps each order ``ε`` to the empirical ``E[e^{εσ}]`` over
    uncensored samples. ``rate`` is the fitted exponent of
    ``|P^n(x,x) - π(x)|`` with 95% band ``rate_band`` and fit quality
    ``r2``; these are ``None`` when ``π`` is unavailable.
    """

    x: str
    seed: int
    n_samples: int
    horizon: int
    method: str
    censored: int
    censored_fraction: float
    censored_fraction_half: float
    heavy_tail: bool
    mean_uncensored: float
    moments: dict
    pi: Optional[float] = None
    rate: Optional[float] = None
    rate_band: Optional[tuple] = None
    const: Optional[float] = None
    r2: Optional[float] = None
    n_fit: int = 0
    period: int = 1


BATCH = 1000


def _batches(seed, n_samples):
    children = np.random.SeedSequence(seed).spawn(-(-n_samples // BATCH))
    left = n_samples
    for ss in children:
        k = min(BATCH, left)
        left -= k
        yield np.random.default_rng(ss), k


def _law_sampler(mu, horizon):
    m = np.arange(1, horizon + 1, dtype=float)
    with np.errstate(divide="ignore"):
        pm = np.exp(mu.log_mass(m))
    cdf = np.cumsum(pm)

    def draw(rng, k):
        u = rng.random(k)
        idx = np.searchsorted(cdf, u, side="right")
        out = (idx + 1).astype(np.int64)
        out[idx >= horizon] = -1
        return out

    return draw


def _walk_sampler_finite(P: SparseNonnegMatrix, x, horizon):
    cum = np.cumsum(P._dense, axis=1)
    cum[:, -1] = np.maximum(cum[:, -1], 1.0)
    start = P.index[x]

    def draw(rng, k):
        state = np.full(k, start)
        out = np.full(k, -1, dtype=np.int64)
        active = np.arange(k)
        for t in range(1, horizon + 1):
            u = rng.random(active.size)
            nxt = (u[:, None] >= cum[state[active]]).sum(axis=1)
            state[active] = nxt
            back = nxt == start
            out[active[back]] = t
            active = active[~back]
            if active.size == 0:
                break
        return out

    return draw


def _walk_sampler_gen(G: StateGenerator, x, horizon):
    cache = {}

    def row(s):
        r = cache.get(s)
        if r is None:
            tg, w = zip(*G.row(s))
            r = (tg, np.cumsum(w) / sum(w))
            cache[s] = r
        return r

    def draw(rng, k):
        out = np.full(k, -1, dtype=np.int64)
        for i in range(k):
            s = x
            for t in range(1, horizon + 1):
                tg, cw = row(s)
                s = tg[min(int(np.searchsorted(cw, rng.random(), side="right")), len(tg) - 1)]
                if s == x:
                    out[i] = t
                    break
        return out

    return draw


def _diag_sequence(K, x, n_max):
    """``P^n(x,x)`` for ``n = 1..n_max``."""
    out = np.empty(n_max)
    if isinstance(K, SparseNonnegMatrix):
        S = K.to_sparse().T.tocsr()
        v = np.zeros(K.n)
        v[K.index[x]] = 1.0
        for n in range(n_max):
            v = S @ v
            out[n] = v[K.index[x]]
        return out
    dist = {x: 1.0}
    for n in range(n_max):
        new = {}
        for s, p in dist.items():
            for y, w in K.row(s):
                new[y] = new.get(y, 0.0) + p * w
        dist = new
        out[n] = dist.get(x, 0.0)
    return out


def simulate_returns(P, x=None, seed: int = 0, n_samples: int = 10_000, horizon: int = 10**6,
                     eps=None, fit_n: int = 200, noise_floor: float = 1e-13) -> ErgodicityFit:
    """Sample return times ``σ_x`` and fit the decay of ``|P^n(x,x) - π(x)|``.

    Samples come in batches of 1000 drawn from independent streams spawned
    from ``seed``, so a larger ``n_samples`` extends the same sample. Return
    times beyond ``horizon`` are censored; the heavy-tail flag is raised
    when at least 5 samples are censored and the censored fraction at
    ``horizon`` exceeds half of that at ``horizon / 2``. Generators carrying
    an excursion law at ``x`` are sampled from that law directly (it is the
    exact law of ``σ_x``); other kernels are walked step by step.
    """
    K = _kernel_of(P)
    finite = isinstance(K, SparseNonnegMatrix)
    x = (K.states[0] if finite else K.root) if x is None else str(x)
    horizon = int(horizon)
    if not finite and K.measure is not None and x == K.root:
        draw, method = _law_sampler(K.measure, horizon), "excursion-law"
    elif finite:
        draw, method = _walk_sampler_finite(K, x, horizon), "walk"
    else:
        draw, method = _walk_sampler_gen(K, x, horizon), "walk"
    samples = np.concatenate([draw(rng, k) for rng, k in _batches(seed, n_samples)])
    cens = samples < 0
    ok = samples[~cens].astype(float)
    n_cens = int(cens.sum())
    frac = n_cens / n_samples
    frac_half = float(np.mean(cens | (samples > horizon // 2)))
    heavy = n_cens >= 5 and frac > 0.5 * frac_half

    if eps is None:
        cl = classify(K)
        g = cl.gap[0] if cl.gap is not None else 0.0
        eps = [min(g / 2, 1.0) if g > 0 else 0.0]
    elif np.isscalar(eps):
        eps = [float(eps)]
    moments = {float(e): float(np.mean(np.exp(e * ok))) if ok.size else INF for e in eps}

    pi = None
    if isinstance(P, ProbKernel) and P.pi is not None:
        pi = P.pi.get(x)
    elif finite:
        pi = _stationary(K)[x]
    fit = {}
    d = K.period or 1
    if pi is not None and pi > 0:
        seq = _diag_sequence(K, x, fit_n)
        n = np.arange(1, fit_n + 1)
        # periodic chains: P^n(x,x) vanishes off multiples of d, compare d·π there
        target = pi * d
        keep = (n % d == 0)
        diff = np.abs(seq[keep] - target)
        nn = n[keep]
        good = diff > noise_floor
        if good.sum() >= 3:
            X, Y = nn[good].astype(float), np.log(diff[good])
            A_ = np.vstack([X, np.ones_like(X)]).T
            coef, *_ = np.linalg.lstsq(A_, Y, rcond=None)
            pred = A_ @ coef
            ss_res = float(np.sum((Y - pred) ** 2))
            ss_tot = float(np.sum((Y - Y.mean()) ** 2))
            r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
            k = X.size
            se = math.sqrt(ss_res / (k - 2) / np.sum((X - X.mean()) ** 2)) if k > 2 else INF
            rate = -float(coef[0])
            fit = dict(rate=rate, rate_band=(rate - 1.96 * se, rate + 1.96 * se),
                       const=float(math.exp(coef[1])), r2=r2, n_fit=int(k))
    return ErgodicityFit(
        x=x, seed=int(seed), n_samples=int(n_samples), horizon=horizon, method=method,
        censored=n_cens, censored_fraction=frac, censored_fraction_half=frac_half, heavy_tail=bool(heavy),
        mean_uncensored=float(ok.mean()) if ok.size else INF, moments=moments, pi=pi, period=d, **fit,
    )
