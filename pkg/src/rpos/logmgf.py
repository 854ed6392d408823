"""Logarithmic moment generating functions of measures on the positive integers.

A :class:`WeightedMeasure` ``μ`` assigns nonnegative mass to lengths
``m = 1, 2, ...``. All sums ``Σ_m m^k μ(m) e^{λm}`` are returned as log-domain
brackets: exact for finitely supported measures, two-sided certified for the
closed-form families (integral-test remainders), and one-sided heuristic for
measures given only by a mass function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import mpmath
import numpy as np
from scipy.special import gammaln, logsumexp

from .exceptions import BoundaryNotFinite, OutsideDomain, PreconditionError

__all__ = [
    "Bracket",
    "WeightedMeasure",
    "AtomicMeasure",
    "PowerExpMeasure",
    "CatalanMeasure",
    "FunctionMeasure",
    "ReweightedMeasure",
    "ShiftedMeasure",
    "TiltedMeasure",
    "geometric",
    "moment_bracket",
    "psi",
    "psi_bracket",
    "tilt",
    "psi_derivatives",
    "boundary_left_derivative",
    "boundary_left_derivative_bracket",
    "power_exp_integral",
]

INF = math.inf
# relative bracket width at which adaptive truncation stops
REL_WIDTH = 1e-12
MAX_TERMS = 1 << 22
# partial sums above this are reported divergent when no tail bound exists
DIVERGENCE_THRESHOLD = 1e12


class Bracket(NamedTuple):
    """Log-domain interval ``[lo, hi]`` for a nonnegative quantity."""

    lo: float
    hi: float
    certified: bool = True

    @property
    def mid(self) -> float:
        if self.hi == INF:
            return INF if self.lo == INF else self.lo
        if self.lo == -INF:
            return self.hi
        return float(np.logaddexp(self.lo, self.hi) - math.log(2.0))

    @property
    def is_infinite(self) -> bool:
        return self.lo == INF

    def contains(self, v: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= v <= self.hi + slack


def _logadd(a, b):
    if a == -INF:
        return b
    if b == -INF:
        return a
    if a == INF or b == INF:
        return INF
    return float(np.logaddexp(a, b))


def power_exp_integral(x0: float, a: float, s: float) -> float:
    """Log of ``∫_{x0}^∞ t^{-a} e^{-s t} dt`` for ``x0 > 0``, ``s >= 0``; ``inf`` if divergent."""
    if s < 0:
        return INF
    if s == 0:
        if a <= 1:
            return INF
        return (1 - a) * math.log(x0) - math.log(a - 1)
    # s^{a-1} Γ(1-a, s x0), upper incomplete gamma with possibly negative order
    with mpmath.workdps(30):
        g = mpmath.gammainc(1 - a, s * x0)
        if g <= 0:
            return -INF
        return float((a - 1) * mpmath.log(s) + mpmath.log(g))


class WeightedMeasure:
    """Nonzero measure on the positive integers.

    Subclasses implement :meth:`log_mass` and may implement
    :meth:`tail_bounds` (certified remainder brackets) and
    :meth:`closed_form` (exact moment sums).
    """

    #: sup of the finiteness domain of ``λ ↦ Σ μ(m) e^{λm}``
    lambda_plus: float = INF
    #: largest length with positive mass, ``None`` for infinite support
    max_length: Optional[int] = None

    def log_mass(self, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def mass(self, m) -> np.ndarray:
        return np.exp(self.log_mass(np.asarray(m)))

    def tail_bounds(self, N: int, lam: float, k: int = 0):
        """Log bracket of ``Σ_{m>N} m^k μ(m) e^{λm}``, or ``None`` if unavailable at this ``N``."""
        return None

    def closed_form(self, lam: float, k: int = 0):
        """Exact log of ``Σ_m m^k μ(m) e^{λm}``, or ``None``."""
        return None

    def _log_terms(self, start: int, stop: int, lam: float, k: int) -> np.ndarray:
        m = np.arange(start, stop + 1, dtype=float)
        t = self.log_mass(m) + lam * m
        if k:
            t = t + k * np.log(m)
        return t


def _partial(mu: WeightedMeasure, start: int, stop: int, lam: float, k: int) -> float:
    if stop < start:
        return -INF
    with np.errstate(divide="ignore"):
        t = mu._log_terms(start, stop, lam, k)
    return float(logsumexp(t)) if t.size else -INF


def moment_bracket(mu: WeightedMeasure, lam: float, k: int = 0, start: int = 1) -> Bracket:
    """Log bracket of ``Σ_{m>=start} m^k μ(m) e^{λm}``."""
    if lam > mu.lambda_plus:
        return Bracket(INF, INF)
    if start == 1:
        cf = mu.closed_form(lam, k)
        if cf is not None:
            if cf == INF:
                return Bracket(INF, INF)
            eps = 1e-14
            return Bracket(cf - eps, cf + eps)
    if mu.max_length is not None:
        v = _partial(mu, start, mu.max_length, lam, k)
        return Bracket(v, v)
    N = max(start + 255, 256)
    while True:
        head = _partial(mu, start, N, lam, k)
        tb = mu.tail_bounds(N, lam, k)
        if tb is None:
            if isinstance(mu, FunctionMeasure) or N >= MAX_TERMS:
                return _heuristic(mu, start, lam, k)
            N *= 2
            continue
        lo, hi = _logadd(head, tb[0]), _logadd(head, tb[1])
        if lo == INF:
            return Bracket(INF, INF)
        if hi == INF:
            if N >= MAX_TERMS:
                return Bracket(lo, INF)
            N *= 2
            continue
        if hi - lo <= REL_WIDTH or N >= MAX_TERMS:
            return Bracket(lo, hi)
        N *= 2


def _heuristic(mu, start, lam, k) -> Bracket:
    # no tail information: sum until the partial sum stabilises or exceeds the threshold
    N = max(start + 255, 256)
    prev = _partial(mu, start, N, lam, k)
    while N < MAX_TERMS:
        N *= 2
        cur = _partial(mu, start, N, lam, k)
        if cur > math.log(DIVERGENCE_THRESHOLD):
            return Bracket(INF, INF, certified=False)
        if cur - prev <= REL_WIDTH:
            return Bracket(cur, INF, certified=False)
        prev = cur
    return Bracket(prev, INF, certified=False)


def psi_bracket(mu: WeightedMeasure, lam: float) -> Bracket:
    return moment_bracket(mu, lam, 0)


def psi(mu: WeightedMeasure, lam: float) -> float:
    """``log Σ_m μ(m) e^{λm}`` in ``(-inf, +inf]``.

    For measures with uncertified tails the lower bound is returned.
    """
    b = psi_bracket(mu, lam)
    return b.mid if b.certified else b.lo


class AtomicMeasure(WeightedMeasure):
    """Finitely supported measure ``{length: mass}``."""

    def __init__(self, atoms: dict, lambda_plus: float = INF):
        clean = {}
        for m, w in atoms.items():
            m = int(m)
            if m < 1:
                raise PreconditionError("lengths must be positive integers")
            if w < 0:
                raise PreconditionError("masses must be nonnegative")
            if w > 0:
                clean[m] = clean.get(m, 0.0) + float(w)
        if not clean:
            raise PreconditionError("measure must be nonzero")
        self.atoms = dict(sorted(clean.items()))
        self.max_length = max(self.atoms)
        self.lambda_plus = lambda_plus

    def __repr__(self):
        return f"AtomicMeasure({self.atoms})"

    def log_mass(self, m):
        m = np.asarray(m)
        out = np.full(m.shape, -INF)
        for length, w in self.atoms.items():
            out[m == length] = math.log(w)
        return out

    def tail_bounds(self, N, lam, k=0):
        return (-INF, -INF) if N >= self.max_length else None


class PowerExpMeasure(WeightedMeasure):
    """``μ(m) = c · m^{-α} · e^{-γ m}``.

    Remainders use the integral test for convex decreasing summands:
    ``∫_{N+1}^∞ f + f(N+1)/2 <= Σ_{m>N} f(m) <= ∫_{N+1/2}^∞ f``.
    """

    def __init__(self, c: float, alpha: float, gamma: float):
        if c <= 0:
            raise PreconditionError("scale must be positive")
        if gamma < 0 or (gamma == 0 and alpha <= 1):
            raise PreconditionError("need gamma > 0, or gamma == 0 with alpha > 1")
        self.c, self.alpha, self.gamma = float(c), float(alpha), float(gamma)
        self.lambda_plus = self.gamma

    def __repr__(self):
        return f"PowerExpMeasure(c={self.c!r}, alpha={self.alpha!r}, gamma={self.gamma!r})"

    def log_mass(self, m):
        m = np.asarray(m, dtype=float)
        return math.log(self.c) - self.alpha * np.log(m) - self.gamma * m

    def tail_bounds(self, N, lam, k=0):
        s = self.gamma - lam
        a = self.alpha - k
        if s < 0:
            return (INF, INF)
        if a <= 0 and s == 0:
            return (INF, INF)
        if a < 0:
            # convex and decreasing only beyond this point
            t0 = (math.sqrt(-a) - a) / s
            if N < t0:
                return None
        logc = math.log(self.c)
        hi = logc + power_exp_integral(N + 0.5, a, s)
        lo = _logadd(
            logc + power_exp_integral(N + 1.0, a, s),
            logc - a * math.log(N + 1.0) - s * (N + 1.0) - math.log(2.0),
        )
        return (lo, hi)


def geometric(r: float, scale: float = 1.0) -> PowerExpMeasure:
    """``μ(m) = scale · (1 - r) r^{m-1}``."""
    if not 0 < r < 1:
        raise PreconditionError("need 0 < r < 1")
    return PowerExpMeasure(scale * (1 - r) / r, 0.0, -math.log(r))


class CatalanMeasure(WeightedMeasure):
    """First-return law of the nearest-neighbour walk on ℤ.

    ``μ(2n) = 2 C_{n-1} (pq)^n`` with ``C`` the Catalan numbers, so that
    ``Σ μ(m) e^{λm} = 1 - sqrt(1 - 4pq e^{2λ})``.
    """

    def __init__(self, p: float, scale: float = 1.0):
        if not 0 < p < 1:
            raise PreconditionError("need 0 < p < 1")
        self.p = float(p)
        self.q = 1.0 - self.p
        self.scale = float(scale)
        self.lambda_plus = -0.5 * math.log(4 * self.p * self.q)

    def __repr__(self):
        return f"CatalanMeasure(p={self.p!r}, scale={self.scale!r})"

    def log_mass(self, m):
        m = np.asarray(m, dtype=float)
        out = np.full(m.shape, -INF)
        even = (m % 2 == 0) & (m >= 2)
        n = m[even] / 2
        logcat = gammaln(2 * n - 1) - gammaln(n + 1) - gammaln(n)
        out[even] = math.log(2 * self.scale) + logcat + n * math.log(self.p * self.q)
        return out

    def closed_form(self, lam, k=0):
        if k > 2:
            return None
        # u = 4pq e^{2λ}, written so that u == 1 exactly at λ_+
        u = math.exp(2.0 * (lam - self.lambda_plus))
        if u > 1.0:
            return INF
        r = 1.0 - u
        ls = math.log(self.scale)
        if k == 0:
            return ls + math.log(-math.expm1(0.5 * math.log1p(-u))) if u < 1 else ls
        if r == 0.0:
            return INF
        if k == 1:
            return ls + math.log(u) - 0.5 * math.log(r)
        return ls + math.log(2 * u / math.sqrt(r) + u * u / r**1.5)

    def tail_bounds(self, N, lam, k=0):
        # 4^j/sqrt(π(j+1/2)) <= binom(2j, j) <= 4^j/sqrt(π(j+1/4)) gives, with n = m/2,
        #   u^n / (2n sqrt(π(n-1/2))) <= μ(2n) e^{2λn} <= u^n / (2n sqrt(π(n-3/4)))
        if k > 1:
            return None
        logu = 2.0 * (lam - self.lambda_plus)
        if logu > 0:
            return (INF, INF)
        s = -logu
        nN = N // 2  # lengths m > N  <=>  n > nN
        if nN < 2:
            return None
        ls = math.log(self.scale)
        c = -0.5 * math.log(math.pi)
        if k == 0:
            # upper: n^{-1}(n-3/4)^{-1/2} <= (n-3/4)^{-3/2}, decreasing -> integral from nN
            hi = ls + c - math.log(2) + power_exp_integral(nN - 0.75, 1.5, s) - 0.75 * s
            # lower: n^{-1}(n-1/2)^{-1/2} >= n^{-3/2}, decreasing -> integral from nN+1
            lo = ls + c - math.log(2) + power_exp_integral(nN + 1.0, 1.5, s)
        else:
            # m * mass = 2n * mass: (n-3/4)^{-1/2} above, n^{-1/2} below
            hi = ls + c + power_exp_integral(nN - 0.75, 0.5, s) - 0.75 * s
            lo = ls + c + power_exp_integral(nN + 1.0, 0.5, s)
        return (lo, hi)


class FunctionMeasure(WeightedMeasure):
    """Measure given by a vectorised mass function only (heuristic sums)."""

    def __init__(self, mass_fn: Callable, lambda_plus: float = INF):
        self.mass_fn = mass_fn
        self.lambda_plus = lambda_plus

    def log_mass(self, m):
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.mass_fn(np.asarray(m)), dtype=float))


class ReweightedMeasure(WeightedMeasure):
    """``μ'(m) = f(m) μ(m)`` with ``f(m) = head[m]`` for listed lengths and ``tail_factor`` beyond.

    Used to express finitely many entry changes of a matrix in terms of its
    excursion law.
    """

    def __init__(self, base: WeightedMeasure, head: dict, tail_factor: float):
        if tail_factor < 0 or any(v < 0 for v in head.values()):
            raise PreconditionError("factors must be nonnegative")
        self.base = base
        self.head = {int(m): float(v) for m, v in head.items()}
        self.cut = max(self.head, default=0)
        self.tail_factor = float(tail_factor)
        self.lambda_plus = base.lambda_plus if tail_factor > 0 else INF
        if base.max_length is not None:
            self.max_length = base.max_length
        elif tail_factor == 0:
            self.max_length = self.cut

    def __repr__(self):
        return f"ReweightedMeasure({self.base!r}, head={self.head}, tail_factor={self.tail_factor})"

    def log_mass(self, m):
        m = np.asarray(m)
        f = np.full(m.shape, self.tail_factor, dtype=float)
        for length, v in self.head.items():
            f[m == length] = v
        with np.errstate(divide="ignore"):
            return self.base.log_mass(m) + np.log(f)

    def tail_bounds(self, N, lam, k=0):
        if N < self.cut:
            return None
        if self.tail_factor == 0:
            return (-INF, -INF)
        tb = self.base.tail_bounds(N, lam, k)
        if tb is None:
            return None
        lf = math.log(self.tail_factor)
        return (tb[0] + lf, tb[1] + lf)

    def closed_form(self, lam, k=0):
        cf = self.base.closed_form(lam, k)
        if cf is None or self.tail_factor == 0:
            return None
        if cf == INF:
            return INF
        total = self.tail_factor * math.exp(cf)
        for length, v in self.head.items():
            total += (v - self.tail_factor) * math.exp(
                float(self.base.log_mass(np.array([length]))[0]) + lam * length + k * math.log(length)
            )
        return math.log(total) if total > 0 else None


class ShiftedMeasure(WeightedMeasure):
    """``μ'(m) = μ(m) e^{shift·m}``; the excursion law seen after a Doob transform."""

    def __init__(self, base: WeightedMeasure, shift: float):
        self.base = base
        self.shift = float(shift)
        self.lambda_plus = base.lambda_plus - self.shift
        self.max_length = base.max_length

    def __repr__(self):
        return f"ShiftedMeasure({self.base!r}, shift={self.shift!r})"

    def log_mass(self, m):
        m = np.asarray(m, dtype=float)
        return self.base.log_mass(m) + self.shift * m

    def tail_bounds(self, N, lam, k=0):
        return self.base.tail_bounds(N, lam + self.shift, k)

    def closed_form(self, lam, k=0):
        return self.base.closed_form(lam + self.shift, k)


@dataclass(frozen=True)
class TiltedMeasure:
    """Probability measure ``e^{λm - ψ(λ)} μ(dm)``."""

    base: WeightedMeasure
    lam: float
    normalizer: float

    def mass(self, m):
        return np.exp(self.base.log_mass(np.asarray(m, dtype=float)) + self.lam * np.asarray(m) - self.normalizer)

    def total_mass(self) -> float:
        b = moment_bracket(self.base, self.lam, 0)
        return math.exp(b.mid - self.normalizer)


def tilt(mu: WeightedMeasure, lam: float) -> TiltedMeasure:
    """Normalised exponential tilt of ``mu`` at ``lam``.

    Raises
    ------
    OutsideDomain
        If ``ψ(lam) = +inf``.
    """
    b = psi_bracket(mu, lam)
    if b.hi == INF:
        raise OutsideDomain(f"psi({lam}) is not finite")
    return TiltedMeasure(mu, lam, b.mid)


def psi_derivatives(mu: WeightedMeasure, lam: float):
    """``(ψ'(λ), ψ''(λ))``, the mean and variance of the tilted measure.

    Raises
    ------
    OutsideDomain
        If ``lam`` is not in the interior of the finiteness domain.
    """
    if not lam < mu.lambda_plus:
        raise OutsideDomain(f"lambda={lam} is not below lambda_plus={mu.lambda_plus}")
    if mu.max_length is not None:
        m = np.arange(1, mu.max_length + 1, dtype=float)
        with np.errstate(divide="ignore"):
            t = mu.log_mass(m) + lam * m
        w = np.exp(t - logsumexp(t))
        mean = float(np.sum(w * m))
        var = float(np.sum(w * (m - mean) ** 2))
        return mean, var
    b0 = moment_bracket(mu, lam, 0)
    b1 = moment_bracket(mu, lam, 1)
    b2 = moment_bracket(mu, lam, 2)
    if b0.hi == INF or b1.hi == INF or b2.hi == INF:
        raise OutsideDomain(f"moments at lambda={lam} are not certified finite")
    mean = math.exp(b1.mid - b0.mid)
    var = math.exp(b2.mid - b0.mid) - mean * mean
    return mean, max(var, 0.0)


def boundary_left_derivative_bracket(mu: WeightedMeasure, at: Optional[float] = None) -> Bracket:
    """Bracket (linear scale) of ``lim_{λ↑λ_+} ψ'(λ)``, the mean of ``μ`` tilted at ``λ_+``.

    ``at`` overrides ``λ_+`` (any point of the domain where ``ψ`` is finite).

    Raises
    ------
    BoundaryNotFinite
        If ``λ_+ = inf`` or ``ψ(λ_+) = inf``.
    """
    lam = mu.lambda_plus if at is None else at
    if lam == INF:
        raise BoundaryNotFinite("lambda_plus is infinite")
    b0 = moment_bracket(mu, lam, 0)
    if b0.hi == INF and (b0.lo == INF or b0.certified):
        raise BoundaryNotFinite(f"psi(lambda_plus={lam}) is infinite")
    b1 = moment_bracket(mu, lam, 1)
    lo = math.exp(b1.lo - b0.hi) if b1.lo != INF else INF
    hi = math.exp(b1.hi - b0.lo) if b1.hi != INF else INF
    return Bracket(lo, hi, b0.certified and b1.certified)


def boundary_left_derivative(mu: WeightedMeasure, at: Optional[float] = None) -> float:
    """Left derivative of ``ψ`` at ``λ_+``, possibly ``inf``."""
    b = boundary_left_derivative_bracket(mu, at)
    if b.lo == INF:
        return INF
    if b.hi == INF:
        return INF if not b.certified else b.lo
    return math.sqrt(b.lo * b.hi) if b.lo > 0 else b.hi
