"""Spectral radius brackets and Green functions.

``ρ(A)`` is located through the identity ``λ_* = -log ρ(A)``, where ``λ_*``
is the sign change of ``ψ_z``: the bisection works on exact elimination
values for finite matrices and on certified brackets for generators carrying
an excursion law. Diagonal powers give lower bounds and excessive test
functions give upper bounds.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import brentq

from .core import SparseNonnegMatrix, StateGenerator, truncate
from .exceptions import (
    InequalityFails,
    NoBracket,
    PreconditionError,
    ZeroDiagonalPower,
)
from .excursion import DEFAULT_WINDOW, psi_value, psi_z_bracket
from .logmgf import Bracket, psi_bracket

__all__ = [
    "SpectralEstimate",
    "GreenValue",
    "rho_lower",
    "rho_upper",
    "rho_bisect",
    "green",
    "green_diagonal_residual",
    "cycle_lower_bound",
]

INF = math.inf


@dataclass(frozen=True)
class SpectralEstimate:
    """Bracket ``[lower, upper]`` for ``ρ(A)``.

    ``lam_bracket`` is the matching ``λ_*`` interval; ``upper = inf`` when
    no upper bound is available (truncation only).
    """

    lower: float
    upper: float
    methods: tuple
    lam_bracket: tuple
    z: str
    certified: bool = True

    @property
    def rho(self) -> float:
        if self.upper == INF:
            return self.lower
        return math.sqrt(self.lower * self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def exact(self) -> bool:
        return self.lower == self.upper

    def contains(self, v: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= v <= self.upper + slack


@dataclass(frozen=True)
class GreenValue:
    """``G_λ(x, y) = Σ_k e^{λk} A^k(x, y)`` as a bracket ``[lo, hi]`` (``inf`` when divergent)."""

    lam: float
    x: str
    y: str
    lo: float
    hi: float
    certified: bool = True

    @property
    def value(self) -> float:
        if self.lo == INF:
            return INF
        if self.hi == INF:
            return self.lo
        return 0.5 * (self.lo + self.hi)

    @property
    def finite(self) -> bool:
        return self.hi < INF


def rho_lower(A: SparseNonnegMatrix, x, n: int) -> float:
    """``(A^n(x,x))^{1/n}``, a lower bound on ``ρ(A)``.

    Raises
    ------
    ZeroDiagonalPower
        If ``A^n(x,x) = 0`` (for instance ``n`` not a multiple of the period).
    """
    x = str(x)
    if n < 1:
        raise PreconditionError("n must be >= 1")
    S = A.to_sparse().T.tocsr()
    v = np.zeros(A.n)
    v[A.index[x]] = 1.0
    logscale = 0.0
    for _ in range(n):
        v = S @ v  # row vector e_x A^k, kept as a column of A^T
        m = v.max()
        if m == 0:
            raise ZeroDiagonalPower(f"A^{n}({x},{x}) = 0")
        v /= m
        logscale += math.log(m)
    d = v[A.index[x]]
    if d <= 0:
        raise ZeroDiagonalPower(f"A^{n}({x},{x}) = 0; n must be a multiple of the period {A.period}")
    return math.exp((logscale + math.log(d)) / n)


def rho_upper(A: SparseNonnegMatrix, h: Mapping, c: float, rtol: float = 1e-13) -> bool:
    """Verify ``Ah <= c h`` entrywise, so that ``ρ(A) <= c``.

    A relative slack ``rtol`` absorbs rounding in the products; the
    certified bound is then ``c (1 + rtol)``.

    Raises
    ------
    InequalityFails
        At the first violating state (in state order).
    """
    hv = np.empty(A.n)
    for s in A.states:
        v = float(h[s])
        if not v > 0:
            raise PreconditionError(f"h({s}) must be positive")
        hv[A.index[s]] = v
    Ah = A.to_sparse() @ hv
    bad = Ah > c * hv * (1 + rtol)
    if bad.any():
        i = int(np.argmax(bad))
        s = A.states[i]
        raise InequalityFails(f"(Ah)({s}) = {Ah[i]!r} > c h({s}) = {c * hv[i]!r}", s)
    return True


def cycle_lower_bound(A: SparseNonnegMatrix, z) -> float:
    """``w(γ)^{1/|γ|}`` for a shortest cycle ``γ`` through ``z``: a lower bound on ``ρ(A)``."""
    z = str(z)
    if (z, z) in A.entries:
        return A.entries[(z, z)]
    parent = {z: None}
    q = deque([z])
    while q:
        u = q.popleft()
        for v, _ in A.successors(u):
            if v == z:
                path = [u]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                cyc = path[::-1] + [z]
                logw = sum(math.log(A.entries[(a, b)]) for a, b in zip(cyc, cyc[1:]))
                return math.exp(logw / (len(cyc) - 1))
            if v not in parent:
                parent[v] = u
                q.append(v)
    raise PreconditionError(f"no cycle through {z}")


def _finite_lambda_star(A, z, tol):
    maxrow = max(A.row_sums().values())
    lo = -math.log(maxrow) - 1.0
    hi = -math.log(cycle_lower_bound(A, z)) + 1.0

    def f(lam):
        return psi_value(A, z, lam).psi

    step = 1.0
    for _ in range(60):
        if f(lo) < 0:
            break
        lo -= step
        step *= 2
    else:
        raise NoBracket("no lambda with psi < 0 found")
    step = 1.0
    for _ in range(60):
        if f(hi) >= 0:
            break
        hi += step
        step *= 2
    else:
        raise NoBracket("no lambda with psi >= 0 found")

    # λ-width giving a ρ-bracket narrower than tol, since ρ <= maxrow
    dl = max(tol / maxrow, 8 * np.spacing(max(abs(lo), abs(hi), 1.0)))

    def g(lam):
        v = psi_value(A, z, lam)
        if v.is_inf:
            return 1.0
        return math.expm1(v.log) if v.kind == "finite" else -1.0

    a, b = lo, hi
    try:
        r = brentq(g, lo, hi, xtol=dl / 4, rtol=4 * np.finfo(float).eps, maxiter=200)
        ca, cb = max(lo, r - dl / 2), min(hi, r + dl / 2)
        if f(ca) < 0 and f(cb) >= 0:
            a, b = ca, cb
    except (ValueError, RuntimeError):
        pass
    while b - a > dl:
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        if f(m) < 0:
            a = m
        else:
            b = m
    return a, b


def _bracket_lambda_star(evaluate, upper, tol_rho, start=None):
    """Bisection for ``λ_*`` from certified ψ brackets.

    ``upper`` is a known upper bound on ``λ_*`` (such as ``λ_+``); returns
    ``(a, b, resolved)`` with ``ψ(a) < 0`` certified.
    """
    if upper < INF and evaluate(upper).hi < 0:
        return upper, upper, True
    b = upper
    a = (upper - 1.0) if start is None else start
    step = 1.0
    for _ in range(80):
        br = evaluate(a)
        if br.hi < 0:
            break
        if br.lo >= 0:
            b = min(b, a)
        a -= step
        step *= 2
    else:
        raise NoBracket("no lambda with certified psi < 0 found")
    resolved = True
    while math.exp(-a) - math.exp(-b) > tol_rho:
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        br = evaluate(m)
        if br.hi < 0:
            a = m
        elif br.lo >= 0:
            b = m
        else:
            resolved = False
            break
    return a, b, resolved


def rho_bisect(X: Union[SparseNonnegMatrix, StateGenerator], z=None, tol: float = 1e-10,
               window: int = DEFAULT_WINDOW) -> SpectralEstimate:
    """Bracket ``ρ`` by locating the sign change of ``ψ_z``.

    Parameters
    ----------
    X : SparseNonnegMatrix or StateGenerator
    z : state, optional
        Reference vertex; defaults to the first state (the root for generators).
    tol : float
        Target width of the ``ρ`` bracket.
    window : int
        Truncation window for generators without an excursion law; only a
        lower bound is returned then.

    Raises
    ------
    NoBracket
    """
    if isinstance(X, SparseNonnegMatrix):
        z = X.states[0] if z is None else str(z)
        if z not in X.index:
            raise PreconditionError(f"{z} is not a state")
        a, b = _finite_lambda_star(X, z, tol)
        return SpectralEstimate(math.exp(-b), math.exp(-a), ("psi-bisection", "psi-bisection"), (a, b), z)

    z = X.root if z is None else str(z)
    if X.measure is not None:
        mu = X.measure
        lp = mu.lambda_plus
        if lp == INF:
            lp = _finite_upper_lambda(mu)
        a, b, resolved = _bracket_lambda_star(lambda lam: psi_bracket(mu, lam), lp, tol)
        return SpectralEstimate(math.exp(-b), math.exp(-a), ("analytic-psi", "analytic-psi"), (a, b), X.root,
                                certified=resolved)
    T = truncate(X, window)
    zz = z if z in T.index else X.root
    est = rho_bisect(T, zz, tol)
    return SpectralEstimate(est.lower, INF, ("truncation-lower", "none"), (est.lam_bracket[0], INF), zz,
                            certified=False)


def _finite_upper_lambda(mu):
    lam, step = 0.0, 1.0
    for _ in range(80):
        if psi_bracket(mu, lam).lo >= 0:
            return lam
        lam += step
        step *= 2
    raise NoBracket("psi stays negative")


def _refined_solve(M, rhs, tol=1e-12, max_iter=5):
    d = np.abs(np.diag(M)).copy()
    d[d == 0] = 1.0
    Ms = M / d[:, None]
    lu = lu_factor(Ms, check_finite=True)
    b = rhs / d
    x = lu_solve(lu, b)
    for _ in range(max_iter):
        r = b - Ms @ x
        if np.linalg.norm(r, np.inf) <= tol * max(np.linalg.norm(x, np.inf), 1e-300):
            break
        x = x + lu_solve(lu, r)
    return x


def green(X: Union[SparseNonnegMatrix, StateGenerator], lam: float, x, y) -> GreenValue:
    """``G_λ(x, y)``.

    For finite matrices ``(I - e^λ A) g = e_y`` is solved with iterative
    refinement: the solution column is positive exactly when
    ``e^λ ρ(A) < 1`` (irreducibility), otherwise the series diverges and
    ``+inf`` is returned. Generators need an analytic Green function or
    first-passage generating functions.
    """
    x, y = str(x), str(y)
    lam = float(lam)
    if isinstance(X, SparseNonnegMatrix):
        for s in (x, y):
            if s not in X.index:
                raise PreconditionError(f"{s} is not a state")
        M = np.eye(X.n) - math.exp(lam) * X._dense
        e = np.zeros(X.n)
        e[X.index[y]] = 1.0
        try:
            with np.errstate(all="ignore"):
                g = _refined_solve(M, e)
        except (np.linalg.LinAlgError, ValueError):
            return GreenValue(lam, x, y, INF, INF)
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            return GreenValue(lam, x, y, INF, INF)
        v = float(g[X.index[x]])
        return GreenValue(lam, x, y, v, v)

    if X.green_fn is not None:
        lo, hi = X.green_fn(x, y, lam)
        return GreenValue(lam, x, y, lo, hi)
    if X.measure is not None and y == X.root and (x == X.root or X.hitting_gf is not None):
        b = psi_bracket(X.measure, lam)
        glo, ghi = _geom_bracket(b)
        if x == X.root:
            return GreenValue(lam, x, y, glo, ghi, b.certified)
        hlo, hhi = X.hitting_gf(x, lam)
        return GreenValue(lam, x, y, _mul(hlo, glo), _mul(hhi, ghi), b.certified)
    raise PreconditionError("generator has no analytic Green function for this pair")


def _geom_bracket(b: Bracket):
    """``1/(1 - e^ψ)`` over a ψ bracket, ``inf`` once ψ may reach 0."""
    lo = INF if b.lo >= 0 else 1.0 / -math.expm1(b.lo)
    hi = INF if b.hi >= 0 else 1.0 / -math.expm1(b.hi)
    return lo, hi


def _mul(a, b):
    if a == 0 or b == 0:
        return 0.0
    return a * b


def green_diagonal_residual(A: SparseNonnegMatrix, z, lam: float) -> float:
    """``|G_λ(z,z)(1 - e^{ψ_z(λ)}) - 1|`` from two independent computations.

    Returns 0 when both sides agree that the value is infinite and ``inf``
    when exactly one of them diverges.
    """
    G = green(A, lam, z, z)
    p = psi_value(A, z, lam)
    psi_neg = p.kind == "zero" or (p.kind == "finite" and p.log < 0)
    if not G.finite or not psi_neg:
        return 0.0 if (not G.finite and not psi_neg) else INF
    return abs(G.value * -math.expm1(p.psi) - 1.0)
