"""Four-way R-classification and perturbation tests.

With ``λ_*`` the sign change of ``ψ_z`` and ``λ_+`` the edge of its
finiteness domain:

* R-transient iff ``ψ_z(λ_*) < 0``;
* R-positive iff the left derivative of ``ψ_z`` at ``λ_*`` is finite,
  R-null-recurrent iff it is infinite;
* strongly R-positive iff ``λ_* < λ_+``.

Equalities at the boundary are only asserted from analytic or tail-bounded
brackets, never from truncations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .core import SparseNonnegMatrix, StateGenerator, Subgraph, truncate
from .exceptions import (
    BoundaryNotFinite,
    NotDominated,
    NotDominating,
    NotSubprobability,
    PreconditionError,
    SupportMismatch,
)
from .excursion import DEFAULT_WINDOW, excursion_table, lambda_plus_infinite, psi_value
from .logmgf import INF, boundary_left_derivative_bracket, moment_bracket, psi_bracket
from .spectral import SpectralEstimate, rho_bisect

__all__ = [
    "R_TRANSIENT",
    "R_NULL",
    "WEAK",
    "STRONG",
    "UNDECIDED",
    "Classification",
    "classify",
    "PerturbationReport",
    "apply_changes",
    "strong_rpos_test",
    "rtrans_test",
    "EssentialRadiusEstimate",
    "essential_radius",
    "exp_moment_positivity",
    "exp_moment_invariance_check",
]

R_TRANSIENT = "R-transient"
R_NULL = "R-null-recurrent"
WEAK = "weakly-R-positive"
STRONG = "strongly-R-positive"
UNDECIDED = "undecided"

#: half-width of the band in which ψ(λ_+) = 0 is accepted from a certified bracket
EQ_TOL = 1e-9


@dataclass(frozen=True)
class Classification:
    """Verdict with the brackets that support it.

    ``psi_at_star`` is a bracket of ``ψ_z(λ_*)``, ``left_derivative`` a
    bracket of ``ψ_z'(λ_*-)`` and ``gap`` a bracket of ``λ_+ - λ_*``;
    entries are ``None`` when not evaluated.
    """

    verdict: str
    psi_at_star: Optional[tuple]
    left_derivative: Optional[tuple]
    gap: Optional[tuple]
    lambda_star: tuple
    lambda_plus: tuple
    rho: SpectralEstimate
    certified: bool
    notes: tuple = ()


def _secant(f, a, b):
    fa, fb = f(a), f(b)
    return (fb - fa) / (b - a)


def _finite_lambda_plus(A, z, start, tol=1e-10):
    if lambda_plus_infinite(A, z):
        return (INF, INF)
    lo, step = start, 1.0
    hi = lo + step
    for _ in range(200):
        if psi_value(A, z, hi).is_inf:
            break
        lo = hi
        step *= 2
        hi = lo + step
    else:
        return (lo, INF)
    while hi - lo > tol * max(1.0, abs(lo)):
        m = 0.5 * (lo + hi)
        if m <= lo or m >= hi:
            break
        if psi_value(A, z, m).is_inf:
            hi = m
        else:
            lo = m
    return (lo, hi)


def _classify_finite(A, z, tol):
    est = rho_bisect(A, z, tol)
    a, b = est.lam_bracket
    lp = _finite_lambda_plus(A, z, b)

    def f(lam):
        return psi_value(A, z, lam).psi

    pa, pb = f(a), f(b)
    # one-sided secants of the convex function ψ bracket ψ'(λ_*)
    step = max(1e-6, 1e3 * (b - a))
    left = _secant(f, a - step, a)
    right_end = min(b + step, 0.5 * (b + lp[0])) if lp[0] < INF else b + step
    right = _secant(f, b, right_end) if right_end > b and f(right_end) < INF else INF
    gap = (lp[0] - b, lp[1] - a)
    certified = gap[0] > 0
    notes = () if certified else ("gap not resolved at this tolerance",)
    return Classification(STRONG, (pa, pb), (left, right), gap, (a, b), lp, est, certified, notes)


def _classify_measure(gen, tol, eq_tol):
    mu = gen.measure
    lp = mu.lambda_plus
    est = rho_bisect(gen, gen.root, tol)
    lam_star = est.lam_bracket
    if lp == INF:
        gap = (INF, INF)
        return Classification(STRONG, None, None, gap, lam_star, (INF, INF), est, True)
    b = psi_bracket(mu, lp)
    if not b.certified:
        return Classification(UNDECIDED, (b.lo, b.hi), None, None, lam_star, (lp, lp), est, False,
                              ("excursion law has no certified tail bounds",))
    if b.hi < -eq_tol:
        return Classification(R_TRANSIENT, (b.lo, b.hi), None, (0.0, 0.0), (lp, lp), (lp, lp), est, True)
    if b.lo > eq_tol:
        a, c = lam_star
        ba, bc = psi_bracket(mu, a), psi_bracket(mu, c)
        # ψ' is increasing, so ψ'(λ_*) lies between the tilted means at the bracket ends
        da = moment_bracket(mu, a, 1).lo - ba.hi
        dc = moment_bracket(mu, c, 1).hi - bc.lo if c < lp else INF
        pa, pc = ba.lo, bc.hi
        return Classification(STRONG, (pa, pc), (math.exp(da), _exp(dc)), (lp - c, lp - a), lam_star,
                              (lp, lp), est, lp - c > 0)
    if b.lo >= -eq_tol and b.hi <= eq_tol:
        try:
            d = boundary_left_derivative_bracket(mu)
        except BoundaryNotFinite:
            d = None
        if d is not None and d.certified and d.lo == INF:
            verdict = R_NULL
        elif d is not None and d.certified and d.hi < INF:
            verdict = WEAK
        else:
            verdict = UNDECIDED
        ld = None if d is None else (d.lo, d.hi)
        return Classification(verdict, (b.lo, b.hi), ld, (0.0, 0.0), (lp, lp), (lp, lp), est,
                              verdict != UNDECIDED, (f"psi(lambda_plus) = 0 accepted within {eq_tol:g}",))
    return Classification(UNDECIDED, (b.lo, b.hi), None, None, lam_star, (lp, lp), est, False,
                          ("psi(lambda_plus) bracket straddles the equality band",))


def _exp(v):
    return INF if v == INF else math.exp(v)


def classify(X: Union[SparseNonnegMatrix, StateGenerator], z=None, tol: float = 1e-10,
             eq_tol: float = EQ_TOL, window: int = DEFAULT_WINDOW) -> Classification:
    """Classify ``X`` as R-transient, R-null-recurrent, weakly or strongly R-positive.

    Finite matrices are always strongly R-positive (certified by a positive
    gap ``λ_+ - λ_*``). Generators are classified from their excursion law
    at the root; without one the verdict is ``undecided`` with truncation
    lower bounds attached.
    """
    if isinstance(X, SparseNonnegMatrix):
        z = X.states[0] if z is None else str(z)
        if z not in X.index:
            raise PreconditionError(f"{z} is not a state")
        return _classify_finite(X, z, tol)
    if X.measure is not None:
        return _classify_measure(X, tol, eq_tol)
    est = rho_bisect(X, X.root, tol, window)
    T = truncate(X, window)
    a = est.lam_bracket[0]
    p = psi_value(T, X.root, a).psi
    return Classification(UNDECIDED, (p, INF), None, None, est.lam_bracket, (-INF, INF), est, False,
                          (f"no excursion law: truncation to {window} states gives lower bounds only",))


# ---------------------------------------------------------------- perturbations


@dataclass(frozen=True)
class PerturbationReport:
    """Comparison of ``ρ(A)`` and ``ρ(B)`` for a finite change of entries.

    ``conclusion`` is a short verdict string, ``epsilon`` the largest
    interpolation weight found with ``ρ(A + ε(B - A)) = ρ(A)`` (R-transience
    search), ``consistent`` whether the outcome agrees with an independent
    classification of ``A``.
    """

    test: str
    rho_A: tuple
    rho_B: tuple
    changed: tuple
    conclusion: str
    strict_change: bool
    equal: bool
    epsilon: Optional[float] = None
    classification_A: Optional[str] = None
    consistent: Optional[bool] = None

    @property
    def drop(self) -> float:
        """Certified lower bound on ``ρ(A) - ρ(B)``."""
        return self.rho_A[0] - self.rho_B[1]


def apply_changes(A, ratios: Mapping):
    """``A`` with ``A(x, y)`` multiplied by ``ratios[(x, y)]``."""
    ratios = {(str(x), str(y)): float(r) for (x, y), r in ratios.items()}
    if isinstance(A, SparseNonnegMatrix):
        for e, r in ratios.items():
            if e not in A.entries:
                raise SupportMismatch(f"{e} is not in the support")
            if not r > 0:
                raise SupportMismatch("ratios must be positive (support is preserved)")
        return A.replace({e: A.entries[e] * r for e, r in ratios.items()})
    return A.perturb(ratios)


def _as_ratios(A, B):
    """Ratios of ``B`` to ``A`` on changed entries; ``B`` is a matrix or a ratio mapping."""
    if isinstance(B, Mapping):
        r = {(str(x), str(y)): float(v) for (x, y), v in B.items()}
        return {e: v for e, v in r.items() if v != 1.0}
    if not isinstance(A, SparseNonnegMatrix) or not isinstance(B, SparseNonnegMatrix):
        raise PreconditionError("for generators pass the change as a {edge: ratio} mapping")
    if set(A.entries) != set(B.entries) or A.states != B.states:
        raise SupportMismatch("A and B must have identical state space and support")
    return {e: B.entries[e] / w for e, w in A.entries.items() if B.entries[e] != w}


def _rho_pair(A, B, tol):
    rA, rB = rho_bisect(A, tol=tol), rho_bisect(B, tol=tol)
    return rA, rB


def strong_rpos_test(A, B, tol: float = 1e-10, classify_A: bool = True) -> PerturbationReport:
    """Decrease finitely many entries and look for a strict drop of ``ρ``.

    A certified ``ρ(B) < ρ(A)`` shows that ``A`` is strongly R-positive;
    conversely a strongly R-positive ``A`` must show a drop.

    Raises
    ------
    SupportMismatch, NotDominated
    """
    ratios = _as_ratios(A, B)
    if not ratios:
        raise PreconditionError("B must differ from A")
    if any(r > 1 for r in ratios.values()):
        raise NotDominated("B must satisfy B <= A")
    if any(not r > 0 for r in ratios.values()):
        raise SupportMismatch("B must keep the support of A")
    Bm = apply_changes(A, ratios)
    t = tol
    for _ in range(3):
        rA, rB = _rho_pair(A, Bm, t)
        if rB.upper < rA.lower or not isinstance(A, SparseNonnegMatrix):
            break
        t /= 100
    drop = rB.upper < rA.lower
    equal = rA.exact and rB.exact and rA.lower == rB.lower
    cA = classify(A, tol=tol).verdict if classify_A else None
    if drop:
        concl = "rho(B) < rho(A): A is strongly R-positive"
    elif equal:
        concl = "rho(B) = rho(A): A is not strongly R-positive"
    else:
        concl = "no certified drop at this tolerance"
    consistent = None if cA is None or cA == UNDECIDED else ((cA == STRONG) == drop)
    return PerturbationReport("strong", (rA.lower, rA.upper), (rB.lower, rB.upper), tuple(sorted(ratios)),
                              concl, drop, equal, None, cA, consistent)


def rtrans_test(A, B, tol: float = 1e-10, max_halvings: int = 40, classify_A: bool = True) -> PerturbationReport:
    """Increase finitely many entries and check whether ``ρ`` stays put.

    ``ρ(B) = ρ(A)`` certified shows that ``A`` is R-transient. The search
    over ``ε = 1, 1/2, 1/4, ...`` returns the largest ``ε`` with
    ``ρ(A + ε(B - A)) = ρ(A)`` certified, if any.

    Raises
    ------
    NotDominating
    """
    ratios = _as_ratios(A, B)
    if not ratios:
        raise PreconditionError("B must differ from A")
    if any(r < 1 for r in ratios.values()):
        raise NotDominating("B must satisfy A <= B")
    rA = rho_bisect(A, tol=tol)
    rB = rho_bisect(apply_changes(A, ratios), tol=tol)
    equal = rA.exact and rB.exact and rA.lower == rB.lower
    increase = rB.lower > rA.upper
    eps = None
    e = 1.0
    for _ in range(max_halvings + 1):
        r = rho_bisect(apply_changes(A, {k: 1.0 + e * (v - 1.0) for k, v in ratios.items()}), tol=tol)
        if r.exact and rA.exact and r.lower == rA.lower:
            eps = e
            break
        if isinstance(A, SparseNonnegMatrix):
            # finite matrices: ρ is strictly increasing, no ε can succeed
            break
        e /= 2
    cA = classify(A, tol=tol).verdict if classify_A else None
    if equal:
        concl = "rho(B) = rho(A): A is R-transient"
    elif increase:
        concl = "rho(B) > rho(A): no R-transience witness"
    else:
        concl = "no certified comparison at this tolerance"
    consistent = None if cA is None or cA == UNDECIDED else ((cA == R_TRANSIENT) == (eps is not None))
    return PerturbationReport("rtrans", (rA.lower, rA.upper), (rB.lower, rB.upper), tuple(sorted(ratios)),
                              concl, increase, equal, eps, cA, consistent)


# ---------------------------------------------------------------- essential radius


@dataclass(frozen=True)
class EssentialRadiusEstimate:
    """Upper bound ``value`` on the essential radius relative to ``window``.

    ``sweep`` lists ``(δ, ρ_lower, ρ_upper)`` for the scaled matrices and
    ``below_rho`` records whether ``value < ρ(A)`` is certified.
    """

    window: tuple
    value: float
    sweep: tuple
    rho: tuple
    below_rho: bool
    monotone: bool


def essential_radius(X, window, deltas: Sequence[float] = (1e-1, 1e-2, 1e-3), tol: float = 1e-10
                     ) -> EssentialRadiusEstimate:
    """Scale the entries in ``window`` by each ``δ`` and record ``ρ``.

    ``window`` is a :class:`Subgraph` (its edges are used) or an iterable of
    edges.
    """
    edges = window.edges if isinstance(window, Subgraph) else window
    edges = tuple(sorted((str(x), str(y)) for x, y in edges))
    if not edges:
        raise PreconditionError("window must contain at least one edge")
    for d in deltas:
        if not 0 < d <= 1:
            raise PreconditionError("deltas must lie in (0, 1]")
    rA = rho_bisect(X, tol=tol)
    rows = []
    for d in sorted(deltas, reverse=True):
        r = rho_bisect(apply_changes(X, {e: d for e in edges}), tol=tol)
        rows.append((float(d), r.lower, r.upper))
    value = min(r[2] for r in rows)
    mono = all(b[2] <= a[2] + tol for a, b in zip(rows, rows[1:]))
    return EssentialRadiusEstimate(edges, value, tuple(rows), (rA.lower, rA.upper), value < rA.lower, mono)


# ---------------------------------------------------------------- exponential moments


def _check_subprob(P):
    if isinstance(P, SparseNonnegMatrix):
        bad = [s for s, v in P.row_sums().items() if v > 1 + 1e-12]
    else:
        bad = []
    if bad:
        raise NotSubprobability(f"row sums exceed 1 at {bad[:5]}")


def exp_moment_positivity(P, F: Subgraph, tol: float = 1e-9, window: int = DEFAULT_WINDOW,
                          gen_threshold: float = 1e-2):
    """Whether ``λ^F_{x,y,+} > 0`` for all ``x, y ∈ F ∩ S``.

    Returns ``(positive, bracket)`` with ``bracket`` enclosing
    ``min_{x,y} λ^F_{x,y,+}``; pairs without excursions have ``λ_+ = inf``.
    Generators are truncated to ``window`` states. The truncated value only
    bounds the true one from above, so it counts as positive when it exceeds
    ``gen_threshold`` (a heuristic, not a certificate).
    """
    _check_subprob(P)
    if not isinstance(P, SparseNonnegMatrix):
        T = truncate(P, window)
        missing = [v for v in F.vertices if v not in T.index]
        if missing:
            raise PreconditionError(f"window too small for F: {missing}")
        _, br = exp_moment_positivity(T, F, tol)
        return br[0] > gen_threshold, br
    for v in F.vertices:
        if v not in P.index:
            raise PreconditionError(f"{v} is not a state")
    idx = np.array([P.index[v] for v in F.vertices])
    block = np.ix_(idx, idx)

    def all_finite(lam):
        return not excursion_table(P, F, lam).inf[block].any()

    if all_finite(0.0):
        lo, hi = 0.0, 1.0
        while all_finite(hi):
            lo, hi = hi, 2 * hi
            if hi > 2.0**60:
                return True, (lo, INF)
    else:
        lo, hi, step = -1.0, 0.0, 1.0
        while not all_finite(lo):
            hi, lo = lo, lo - step
            step *= 2
            if step > 2.0**60:
                return False, (-INF, hi)
    while hi - lo > tol:
        m = 0.5 * (lo + hi)
        if all_finite(m):
            lo = m
        else:
            hi = m
    return lo > 0, (lo, hi)


def exp_moment_invariance_check(P, F1: Subgraph, F2: Subgraph, tol: float = 1e-9,
                                window: int = DEFAULT_WINDOW, gen_threshold: float = 1e-2) -> bool:
    """Check that positivity of all ``λ^F_{x,y,+}`` agrees for ``F1`` and ``F2``.

    Raises
    ------
    NotSubprobability
    """
    if not F1.vertices or not F2.vertices:
        raise PreconditionError("subgraphs must be nonempty")
    p1, _ = exp_moment_positivity(P, F1, tol, window, gen_threshold)
    p2, _ = exp_moment_positivity(P, F2, tol, window, gen_threshold)
    return p1 == p2
