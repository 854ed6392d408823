"""Excursion moment generating functions by graph elimination.

For a finite matrix ``A``, a subgraph ``F`` and ``x, y ∈ F ∩ S`` the function
``φ^F_{x,y}(λ)`` sums ``e^{λℓ} A(ω)`` over excursions ``ω`` away from ``F``.
Starting from the full graph, where every table entry is zero, removing an
edge adds its single-step contribution and removing an isolated vertex ``z``
splices in all passages through ``z`` with the geometric factor
``1 / (1 - φ_{z,z})``. Removing every edge outside ``F`` and then every vertex
outside ``F`` leaves the table for ``F``.

Tables are held in the log domain with explicit zero and ``+inf`` masks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .core import SparseNonnegMatrix, StateGenerator, Subgraph, strongly_connected_labels, truncate
from .exceptions import (
    EdgeNotInSubgraph,
    NoSignChange,
    PreconditionError,
    VertexHasEdges,
    VertexNotInSubgraph,
)
from .logmgf import Bracket, psi_bracket

__all__ = [
    "GfValue",
    "GfTable",
    "PsiSample",
    "PsiProfile",
    "full_table",
    "remove_edge",
    "remove_vertex",
    "excursion_table",
    "excursion_gf",
    "psi_value",
    "psi_z_bracket",
    "psi_profile",
    "psi_samples",
    "elimination_order",
    "lambda_plus_infinite",
]

INF = math.inf
#: ``φ_{z,z}`` within this distance of 1 is treated as divergent and flagged
BOUNDARY = 1e-12
_LOG_LOWER = math.log1p(-BOUNDARY)
_LOG_UPPER = math.log1p(BOUNDARY)


@dataclass(frozen=True)
class GfValue:
    """Extended nonnegative real: exact zero, a finite log-value, or ``+inf``."""

    kind: str  # "zero" | "finite" | "inf"
    log: float = 0.0
    boundary: bool = False

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def inf(cls, boundary=False):
        return cls("inf", 0.0, boundary)

    @classmethod
    def from_float(cls, v: float):
        if v == 0:
            return cls.zero()
        if v == INF:
            return cls.inf()
        if v < 0 or math.isnan(v):
            raise PreconditionError(f"GfValue must be nonnegative, got {v}")
        return cls("finite", math.log(v))

    @classmethod
    def from_log(cls, lv: float):
        if lv == -INF:
            return cls.zero()
        if lv == INF:
            return cls.inf()
        return cls("finite", float(lv))

    @property
    def is_zero(self):
        return self.kind == "zero"

    @property
    def is_inf(self):
        return self.kind == "inf"

    @property
    def value(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "inf":
            return INF
        return math.exp(self.log)

    @property
    def psi(self) -> float:
        """Log-value in ``[-inf, +inf]``."""
        if self.kind == "zero":
            return -INF
        if self.kind == "inf":
            return INF
        return self.log

    def __add__(self, other: "GfValue") -> "GfValue":
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        if self.is_inf or other.is_inf:
            return GfValue.inf(self.boundary or other.boundary)
        return GfValue("finite", float(np.logaddexp(self.log, other.log)))

    def __mul__(self, other: "GfValue") -> "GfValue":
        if self.is_zero or other.is_zero:
            return GfValue.zero()
        if self.is_inf or other.is_inf:
            return GfValue.inf(self.boundary or other.boundary)
        return GfValue("finite", self.log + other.log)

    def __repr__(self):
        if self.kind == "finite":
            return f"GfValue({self.value!r})"
        return f"GfValue({self.kind}{', boundary' if self.boundary else ''})"


@dataclass(frozen=True)
class GfTable:
    """``φ^F_{x,y}(λ)`` for all ``x, y ∈ F ∩ S``.

    Arrays are indexed by the matrix's state order; only rows and columns
    of vertices still in ``F`` are meaningful.
    """

    A: SparseNonnegMatrix
    F: Subgraph
    lam: float
    logv: np.ndarray = field(repr=False)
    zero: np.ndarray = field(repr=False)
    inf: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)

    @property
    def vertices(self):
        return [s for s in self.A.states if s in self.F.vertices]

    def __getitem__(self, xy) -> GfValue:
        x, y = (str(v) for v in xy)
        if x not in self.F.vertices or y not in self.F.vertices:
            raise VertexNotInSubgraph(f"({x}, {y}) not in F")
        i, j = self.A.index[x], self.A.index[y]
        if self.zero[i, j]:
            return GfValue.zero()
        if self.inf[i, j]:
            return GfValue.inf(bool(self.boundary[i, j]))
        return GfValue("finite", float(self.logv[i, j]))

    @property
    def table(self) -> dict:
        vs = self.vertices
        return {(x, y): self[x, y] for x in vs for y in vs}


def full_table(A: SparseNonnegMatrix, lam: float) -> GfTable:
    """Table for ``F = G``: no walk is an excursion away from the whole graph."""
    n = A.n
    return GfTable(
        A, Subgraph.full(A), float(lam),
        np.zeros((n, n)), np.ones((n, n), dtype=bool),
        np.zeros((n, n), dtype=bool), np.zeros((n, n), dtype=bool),
    )


def remove_edge(t: GfTable, e) -> GfTable:
    """Table for ``F \\ {e}``: the edge becomes a length-one excursion.

    Raises
    ------
    EdgeNotInSubgraph
        If ``e`` is not an edge of ``t.F``.
    """
    x, y = str(e[0]), str(e[1])
    if (x, y) not in t.F.edges:
        raise EdgeNotInSubgraph(f"({x}, {y}) is not an edge of F")
    logv, zero = t.logv.copy(), t.zero.copy()
    i, j = t.A.index[x], t.A.index[y]
    _add_edge(logv, zero, t.inf, i, j, t.lam + math.log(t.A.entries[(x, y)]))
    return GfTable(t.A, t.F.without_edge((x, y)), t.lam, logv, zero, t.inf.copy(), t.boundary.copy())


def _add_edge(logv, zero, inf, i, j, lw):
    if inf[i, j]:
        return
    if zero[i, j]:
        logv[i, j] = lw
        zero[i, j] = False
    else:
        logv[i, j] = np.logaddexp(logv[i, j], lw)


def remove_vertex(t: GfTable, z) -> GfTable:
    """Table for ``F \\ {z}`` with ``z`` an isolated vertex of ``F``.

    Raises
    ------
    VertexNotInSubgraph, VertexHasEdges
    """
    z = str(z)
    if z not in t.F.vertices:
        raise VertexNotInSubgraph(f"{z} is not a vertex of F")
    if any(z in e for e in t.F.edges):
        raise VertexHasEdges(f"{z} still has edges in F")
    arrays = [a.copy() for a in (t.logv, t.zero, t.inf, t.boundary)]
    alive = np.zeros(t.A.n, dtype=bool)
    alive[[t.A.index[s] for s in t.vertices]] = True
    _eliminate(*arrays, alive, t.A.index[z])
    return GfTable(t.A, t.F.without_vertex(z), t.lam, *arrays)


def _eliminate(logv, zero, inf, bnd, alive, p):
    """In-place removal of vertex index ``p``; ``alive`` is a boolean mask of vertices still present.

    Only rows entering ``p`` and columns leaving ``p`` change. Returns the
    updated row and column indices and the mask of newly created entries.
    """
    if zero[p, p]:
        lg, ginf, gb = 0.0, False, False
    elif inf[p, p]:
        lg, ginf, gb = 0.0, True, bool(bnd[p, p])
    elif logv[p, p] >= _LOG_LOWER:
        lg, ginf, gb = 0.0, True, bool(logv[p, p] <= _LOG_UPPER)
    else:
        lg, ginf, gb = -math.log1p(-math.exp(logv[p, p])), False, False

    others = alive.copy()
    others[p] = False
    rows = np.flatnonzero(others & ~zero[:, p])
    cols = np.flatnonzero(others & ~zero[p, :])
    if rows.size == 0 or cols.size == 0:
        return rows, cols, np.zeros((rows.size, cols.size), dtype=bool)
    cinf = inf[rows, p][:, None] | inf[p, cols][None, :] | ginf
    lc = logv[rows, p][:, None] + lg + logv[p, cols][None, :]

    blk = np.ix_(rows, cols)
    lb, zb, ib = logv[blk], zero[blk], inf[blk]
    new_inf = ib | cinf
    new_log = np.where(new_inf, 0.0, np.where(zb, lc, np.logaddexp(lb, lc)))
    bsrc = bnd[rows, p][:, None] | bnd[p, cols][None, :] | gb
    bnd[blk] = bnd[blk] | (cinf & bsrc)
    logv[blk] = new_log
    zero[blk] = False
    inf[blk] = new_inf
    return rows, cols, zb


def elimination_order(A: SparseNonnegMatrix, F: Subgraph, lam: float = 0.0):
    """Min-degree order (ties broken by label) in which vertices outside ``F`` are removed."""
    _, order = _run(A, F, lam, None)
    return order


def _initial_arrays(A, F, lam):
    n = A.n
    logw, mask = A.log_dense
    in_f = np.zeros((n, n), dtype=bool)
    for x, y in F.edges:
        in_f[A.index[x], A.index[y]] = True
    add = mask & ~in_f
    logv = np.where(add, logw + lam, 0.0)
    zero = ~add
    return logv, zero, np.zeros((n, n), dtype=bool), np.zeros((n, n), dtype=bool)


def _run(A, F, lam, order):
    for v in F.vertices:
        if v not in A.index:
            raise VertexNotInSubgraph(f"{v} is not a state of the matrix")
    for e in F.edges:
        if e not in A.entries:
            raise EdgeNotInSubgraph(f"{e} is not an edge of the matrix")
    logv, zero, inf, bnd = _initial_arrays(A, F, lam)
    n = A.n
    out = np.array([A.index[s] for s in A.states if s not in F.vertices], dtype=int)
    alive = np.ones(n, dtype=bool)
    if order is not None:
        order = [str(s) for s in order]
        if sorted(order) != sorted(A.states[i] for i in out):
            raise PreconditionError("order must list exactly the vertices outside F")
        seq = [A.index[s] for s in order]
    else:
        # min-degree with lexicographic tie-break, degrees maintained incrementally
        nz = ~zero
        np.fill_diagonal(nz, False)
        deg = nz.sum(axis=0) + nz.sum(axis=1)
        rank = np.empty(n, dtype=np.int64)
        rank[np.argsort(np.array(A.states, dtype=object), kind="stable")] = np.arange(n)
        seq = None
    remaining = np.zeros(n, dtype=bool)
    remaining[out] = True
    done = []
    for step in range(out.size):
        if seq is not None:
            p = seq[step]
        else:
            cand = np.flatnonzero(remaining)
            p = int(cand[np.argmin(deg[cand] * n + rank[cand])])
        rows, cols, was_zero = _eliminate(logv, zero, inf, bnd, alive, p)
        if seq is None:
            deg[rows] -= 1
            deg[cols] -= 1
            fresh = was_zero & (rows[:, None] != cols[None, :])
            deg[rows] += fresh.sum(axis=1)
            deg[cols] += fresh.sum(axis=0)
        alive[p] = False
        remaining[p] = False
        done.append(A.states[p])
    return (logv, zero, inf, bnd), done


def excursion_table(A: SparseNonnegMatrix, F: Subgraph, lam: float, order: Optional[Sequence] = None) -> GfTable:
    """All ``φ^F_{x,y}(λ)``, ``x, y ∈ F ∩ S``, by elimination.

    ``order`` optionally fixes the vertex elimination order (default:
    min-degree with lexicographic tie-break).
    """
    arrays, _ = _run(A, F, float(lam), order)
    return GfTable(A, F, float(lam), *arrays)


def excursion_gf(A: SparseNonnegMatrix, F: Subgraph, x, y, lam: float, order=None) -> GfValue:
    """``φ^F_{x,y}(λ)``."""
    x, y = str(x), str(y)
    if x not in F.vertices or y not in F.vertices:
        raise VertexNotInSubgraph(f"({x}, {y}) must lie in F")
    return excursion_table(A, F, lam, order)[x, y]


def psi_value(A: SparseNonnegMatrix, z, lam: float) -> GfValue:
    """``φ_z(λ)``: excursions away from the single vertex ``z``."""
    z = str(z)
    return excursion_table(A, Subgraph.point(z), lam)[z, z]


def lambda_plus_infinite(A: SparseNonnegMatrix, z) -> bool:
    """True when no excursion away from ``z`` can be arbitrarily long (``S \\ {z}`` is acyclic)."""
    z = str(z)
    rest = [s for s in A.states if s != z]
    if not rest:
        return True
    idx = {s: i for i, s in enumerate(rest)}
    rows, cols = [], []
    for (x, y) in A.entries:
        if x in idx and y in idx:
            if x == y:
                return False
            rows.append(idx[x])
            cols.append(idx[y])
    labels = strongly_connected_labels(len(rest), rows, cols)
    return len(set(labels.tolist())) == len(rest)


DEFAULT_WINDOW = 256


def psi_z_bracket(X: Union[SparseNonnegMatrix, StateGenerator], z, lam: float, window: int = DEFAULT_WINDOW) -> Bracket:
    """Log-domain bracket of ``ψ_z(λ)``.

    Exact for finite matrices, analytic for generators carrying an excursion
    law at ``z``, and a certified lower bound (upper bound ``inf``,
    uncertified) from truncation otherwise.
    """
    if isinstance(X, SparseNonnegMatrix):
        v = psi_value(X, z, lam)
        p = v.psi
        return Bracket(p, p)
    z = str(z)
    if X.measure is not None and z == X.root:
        return psi_bracket(X.measure, lam)
    T = truncate(X, window)
    if z not in T.index:
        raise PreconditionError(f"{z} is not in the truncation's component")
    p = psi_value(T, z, lam).psi
    return Bracket(p, INF, certified=False)


@dataclass(frozen=True)
class PsiSample:
    lam: float
    lo: float
    hi: float
    flag: str = "exact"  # exact | certified | boundary | heuristic

    @property
    def finite(self):
        return self.hi < INF


@dataclass(frozen=True)
class PsiProfile:
    """Samples of ``ψ_z`` on a grid with brackets for ``λ_*`` and ``λ_+``.

    ``lambda_plus`` is ``(lo, hi)`` with ``hi = inf`` when ``λ_+`` lies beyond
    the grid; ``lambda_plus_infinite`` records a structural ``λ_+ = +inf``.
    """

    z: str
    samples: tuple
    lambda_star: tuple
    lambda_plus: tuple
    lambda_plus_infinite: bool = False
    certified: bool = True

    def monotone(self) -> bool:
        vals = [s.lo for s in self.samples]
        return all(b >= a for a, b in zip(vals, vals[1:]))

    def midpoint_convex(self, slack: float = 1e-9) -> bool:
        pts = [(s.lam, s.lo) for s in self.samples if s.finite]
        for (l0, p0), (l1, p1), (l2, p2) in zip(pts, pts[1:], pts[2:]):
            if abs((l0 + l2) / 2 - l1) < 1e-12 and p1 > (p0 + p2) / 2 + slack:
                return False
        return True


def _sample(X, z, lam, window):
    if isinstance(X, SparseNonnegMatrix):
        v = psi_value(X, z, lam)
        p = v.psi
        return PsiSample(lam, p, p, "boundary" if v.boundary else "exact")
    if X.measure is not None and str(z) == X.root:
        b = psi_bracket(X.measure, lam)
        return PsiSample(lam, b.lo, b.hi, "certified" if b.certified else "heuristic")
    lo = psi_z_bracket(X, z, lam, window).lo
    lo_half = psi_z_bracket(X, z, lam, max(window // 2, 2)).lo
    # Richardson-style extrapolation over two windows; not a bound
    est = lo + (lo - lo_half) if math.isfinite(lo) and math.isfinite(lo_half) else lo
    return PsiSample(lam, lo, max(est, lo), "heuristic")


def psi_samples(X, z, grid: Sequence[float], window: int = DEFAULT_WINDOW) -> tuple:
    """``ψ_z`` brackets on a strictly increasing grid, as :class:`PsiSample` rows."""
    grid = [float(g) for g in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise PreconditionError("grid must be strictly increasing")
    return tuple(_sample(X, str(z), lam, window) for lam in grid)


def psi_profile(X, z, grid: Sequence[float], tol: float = 1e-10, window: int = DEFAULT_WINDOW) -> PsiProfile:
    """Sample ``ψ_z`` on ``grid`` and bracket ``λ_*`` and ``λ_+``.

    Raises
    ------
    NoSignChange
        If no grid interval is seen to contain ``λ_*``.
    """
    grid = [float(g) for g in grid]
    z = str(z)
    samples = psi_samples(X, z, grid, window)
    certified = all(s.flag != "heuristic" for s in samples)

    def neg(s):
        return s.hi < 0

    def nonneg(s):
        return s.lo >= 0

    i = next((k for k, s in enumerate(samples) if nonneg(s)), None)
    # samples whose bracket straddles 0 sit between the last negative one and i
    j = None if i is None else next((k for k in range(i - 1, -1, -1) if neg(samples[k])), None)
    if i is None or j is None:
        raise NoSignChange("grid does not bracket lambda_*; widen it")
    a, b = grid[j], grid[i]
    while b - a > tol:
        m = 0.5 * (a + b)
        s = _sample(X, z, m, window)
        if neg(s):
            a = m
        elif nonneg(s):
            b = m
        else:
            break
    lam_star = (a, b)

    structural_inf = False
    if isinstance(X, SparseNonnegMatrix):
        structural_inf = lambda_plus_infinite(X, z)
    elif X.measure is not None and z == X.root:
        lp = X.measure.lambda_plus
        return PsiProfile(z, samples, lam_star, (lp, lp), lp == INF, certified)

    j = next((k for k, s in enumerate(samples) if s.lo == INF), None)
    if j is None or structural_inf:
        lam_plus = (grid[-1], INF)
    elif j == 0:
        lam_plus = (-INF, grid[0])
    else:
        a, b = grid[j - 1], grid[j]
        while b - a > tol:
            m = 0.5 * (a + b)
            if _sample(X, z, m, window).lo == INF:
                b = m
            else:
                a = m
        lam_plus = (a, b)
    return PsiProfile(z, samples, lam_star, lam_plus, structural_inf, certified)
