"""State spaces, sparse nonnegative matrices, walks and subgraphs.

Finite matrices are :class:`SparseNonnegMatrix` objects: immutable, validated
irreducible, with their period computed at construction. Countably infinite
matrices are described lazily by a :class:`StateGenerator` which exposes rows
on demand and, for the built-in models, the analytic excursion law at a root
state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Hashable, Iterable, NamedTuple, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .exceptions import (
    EdgeNotInSupport,
    EmptyComponent,
    NonpositiveWeight,
    NotIrreducible,
    ParseError,
    PreconditionError,
)

__all__ = [
    "SparseNonnegMatrix",
    "StateGenerator",
    "Walk",
    "Subgraph",
    "LogValue",
    "build_matrix",
    "walk_weight",
    "truncate",
    "read_tsv",
    "parse_tsv",
    "format_tsv",
    "strongly_connected_labels",
]


class LogValue(NamedTuple):
    """A nonnegative number stored as ``(log, zero)``; ``log`` is meaningless when ``zero``."""

    log: float
    zero: bool

    @property
    def value(self) -> float:
        return 0.0 if self.zero else math.exp(self.log)


def strongly_connected_labels(n, rows, cols):
    """Strongly connected component label of each of ``n`` vertices."""
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return connected_components(g, directed=True, connection="strong")[1]


def _period(n, rows, cols):
    # gcd of level[u] + 1 - level[v] over all edges, levels from a BFS tree
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    order, pred = breadth_first_order(g, 0, directed=True, return_predecessors=True)
    level = np.zeros(n, dtype=np.int64)
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    d = 0
    for u, v in zip(rows, cols):
        d = math.gcd(d, int(abs(level[u] + 1 - level[v])))
    return d


class SparseNonnegMatrix:
    """Finite irreducible nonnegative matrix with explicit support graph.

    Parameters
    ----------
    states : iterable of hashable
        State labels, coerced to ``str``; their order is kept.
    entries : mapping
        ``{(x, y): weight}`` with strictly positive weights.

    Raises
    ------
    NonpositiveWeight
        If any stored weight is not strictly positive and finite.
    NotIrreducible
        If the support digraph is not strongly connected.
    """

    def __init__(self, states: Iterable[Hashable], entries: dict):
        states = tuple(str(s) for s in states)
        if len(set(states)) != len(states):
            raise PreconditionError("duplicate state labels")
        if not states:
            raise NotIrreducible("empty state space")
        index = {s: i for i, s in enumerate(states)}
        clean = {}
        for (x, y), w in entries.items():
            x, y = str(x), str(y)
            if x not in index or y not in index:
                raise PreconditionError(f"entry ({x}, {y}) refers to an unknown state")
            w = float(w)
            if not (w > 0.0 and math.isfinite(w)):
                raise NonpositiveWeight(f"weight of ({x}, {y}) is {w!r}; must be finite and > 0")
            clean[(x, y)] = w
        rows = [index[x] for x, _ in clean]
        cols = [index[y] for _, y in clean]
        n = len(states)
        labels = strongly_connected_labels(n, rows, cols)
        if len(set(labels.tolist())) != 1 or not clean:
            raise NotIrreducible("support digraph is not strongly connected")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "entries", clean)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "period", _period(n, rows, cols))

    def __setattr__(self, name, value):
        raise AttributeError("SparseNonnegMatrix is immutable")

    def __repr__(self):
        return f"SparseNonnegMatrix(n={self.n}, nnz={len(self.entries)}, period={self.period})"

    def __eq__(self, other):
        return (
            isinstance(other, SparseNonnegMatrix)
            and self.states == other.states
            and self.entries == other.entries
        )

    def __hash__(self):
        return hash((self.states, tuple(sorted(self.entries.items()))))

    @property
    def n(self) -> int:
        return len(self.states)

    def weight(self, x, y) -> float:
        return self.entries.get((str(x), str(y)), 0.0)

    @cached_property
    def _succ(self):
        succ = {s: [] for s in self.states}
        for (x, y), w in self.entries.items():
            succ[x].append((y, w))
        for s in succ:
            succ[s].sort(key=lambda t: self.index[t[0]])
        return succ

    def successors(self, x):
        """List of ``(y, A(x, y))`` with ``A(x, y) > 0``."""
        return list(self._succ[str(x)])

    def to_dense(self) -> np.ndarray:
        return self._dense.copy()

    @cached_property
    def _dense(self):
        a = np.zeros((self.n, self.n))
        for (x, y), w in self.entries.items():
            a[self.index[x], self.index[y]] = w
        a.flags.writeable = False
        return a

    @cached_property
    def log_dense(self):
        """``(log_weights, support_mask)``; log entries off the support are 0 and must be masked."""
        mask = self._dense > 0
        logw = np.zeros((self.n, self.n))
        logw[mask] = np.log(self._dense[mask])
        mask.flags.writeable = False
        logw.flags.writeable = False
        return logw, mask

    def to_sparse(self) -> csr_matrix:
        rows = [self.index[x] for x, _ in self.entries]
        cols = [self.index[y] for _, y in self.entries]
        return csr_matrix((list(self.entries.values()), (rows, cols)), shape=(self.n, self.n))

    def row_sums(self) -> dict:
        return {s: sum(w for _, w in self._succ[s]) for s in self.states}

    def triples(self):
        return [(x, y, w) for (x, y), w in self.entries.items()]

    def replace(self, changes: dict) -> "SparseNonnegMatrix":
        """Copy with ``{(x, y): new_weight}`` applied; a weight of 0 removes the entry."""
        entries = dict(self.entries)
        for (x, y), w in changes.items():
            key = (str(x), str(y))
            if w == 0:
                entries.pop(key, None)
            else:
                entries[key] = w
        return SparseNonnegMatrix(self.states, entries)

    def scaled(self, c: float) -> "SparseNonnegMatrix":
        return SparseNonnegMatrix(self.states, {k: c * w for k, w in self.entries.items()})


def build_matrix(triples) -> SparseNonnegMatrix:
    """Validated matrix from ``(x, y, weight)`` triples.

    States are ordered by first appearance. Duplicate pairs are rejected.

    >>> build_matrix([("a", "b", 1), ("b", "a", 1)]).period
    2
    """
    states = {}
    entries = {}
    for t in triples:
        try:
            x, y, w = t
        except (TypeError, ValueError):
            raise ParseError(f"expected (x, y, weight) triple, got {t!r}") from None
        x, y = str(x), str(y)
        states.setdefault(x, None)
        states.setdefault(y, None)
        if (x, y) in entries:
            raise PreconditionError(f"duplicate entry ({x}, {y})")
        entries[(x, y)] = w
    return SparseNonnegMatrix(states, entries)


@dataclass(frozen=True)
class Walk:
    """A walk ``ω_0 → ω_1 → … → ω_ℓ`` of length ``ℓ = len(vertices) - 1``."""

    vertices: tuple

    def __post_init__(self):
        if not self.vertices:
            raise PreconditionError("a walk has at least one vertex")
        object.__setattr__(self, "vertices", tuple(str(v) for v in self.vertices))

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    def steps(self):
        return list(zip(self.vertices[:-1], self.vertices[1:]))

    def __add__(self, other: "Walk") -> "Walk":
        if self.vertices[-1] != other.vertices[0]:
            raise PreconditionError("walks do not join")
        return Walk(self.vertices + other.vertices[1:])


@dataclass(frozen=True)
class Subgraph:
    """A finite set of vertices plus a set of edges between them."""

    vertices: frozenset = field(default_factory=frozenset)
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        vs = frozenset(str(v) for v in self.vertices)
        es = frozenset((str(x), str(y)) for x, y in self.edges)
        for x, y in es:
            if x not in vs or y not in vs:
                raise PreconditionError(f"edge ({x}, {y}) has an endpoint outside the subgraph")
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "edges", es)

    @classmethod
    def full(cls, A: SparseNonnegMatrix) -> "Subgraph":
        return cls(frozenset(A.states), frozenset(A.entries))

    @classmethod
    def point(cls, z) -> "Subgraph":
        return cls(frozenset([str(z)]))

    def without_edge(self, e) -> "Subgraph":
        return Subgraph(self.vertices, self.edges - {(str(e[0]), str(e[1]))})

    def without_vertex(self, z) -> "Subgraph":
        return Subgraph(self.vertices - {str(z)}, self.edges)


def walk_weight(A: SparseNonnegMatrix, walk: Walk) -> LogValue:
    """Product of the matrix entries along ``walk``, in the log domain.

    The empty product (a walk of length 0) is 1.

    Raises
    ------
    EdgeNotInSupport
        If a step of the walk is not an edge of ``A``.
    """
    for v in walk.vertices:
        if v not in A.index:
            raise EdgeNotInSupport(f"vertex {v} is not a state of the matrix")
    total = 0.0
    for x, y in walk.steps():
        w = A.entries.get((x, y))
        if w is None:
            raise EdgeNotInSupport(f"({x}, {y}) is not in the support")
        total += math.log(w)
    return LogValue(total, False)


@dataclass(frozen=True)
class StateGenerator:
    """Lazy row-access description of a countably infinite nonnegative matrix.

    Attributes
    ----------
    row_fn : callable
        ``state -> [(target, weight), ...]`` with strictly positive weights.
    state_of, index_of : callable
        Bijection between states and nonnegative integers.
    root : str
        Designated reference state.
    measure : WeightedMeasure, optional
        Excursion-length law at ``root``: mass ``μ(m)`` is the total weight of
        excursions away from ``root`` of length ``m``.
    hitting_gf : callable, optional
        ``(x, lam) -> (lo, hi)`` bracket of the first-passage generating
        function from ``x`` to ``root`` (``x != root``).
    green_fn : callable, optional
        ``(x, y, lam) -> (lo, hi)`` bracket of the Green function.
    perturber : callable, optional
        ``{edge: ratio} -> StateGenerator`` for finitely many multiplicative
        entry changes, raising :class:`UnsupportedPerturbation` when the model
        cannot express the result.
    """

    row_fn: Callable
    state_of: Callable
    index_of: Callable
    root: str
    measure: Optional[object] = None
    hitting_gf: Optional[Callable] = None
    green_fn: Optional[Callable] = None
    perturber: Optional[Callable] = None
    period: Optional[int] = None
    name: str = "generator"
    params: dict = field(default_factory=dict)

    def row(self, x):
        x = str(x)
        out = []
        for y, w in self.row_fn(x):
            w = float(w)
            if not w > 0:
                raise PreconditionError(f"row of {x} has nonpositive weight {w}")
            out.append((str(y), w))
        return out

    def weight(self, x, y) -> float:
        for t, w in self.row(x):
            if t == str(y):
                return w
        return 0.0

    def perturb(self, ratios: dict) -> "StateGenerator":
        if self.perturber is None:
            from .exceptions import UnsupportedPerturbation

            raise UnsupportedPerturbation(f"{self.name} does not support perturbations")
        return self.perturber({(str(x), str(y)): float(r) for (x, y), r in ratios.items()})


def truncate(gen: StateGenerator, window: int) -> SparseNonnegMatrix:
    """Restrict ``gen`` to its first ``window`` states and keep the root's component.

    Raises
    ------
    EmptyComponent
        If the root lies on no cycle inside the window.
    """
    if window < 1:
        raise PreconditionError("window must be >= 1")
    states = [str(gen.state_of(i)) for i in range(window)]
    if gen.root not in states:
        raise EmptyComponent(f"root {gen.root} is outside the window")
    inside = set(states)
    index = {s: i for i, s in enumerate(states)}
    entries = {}
    for x in states:
        for y, w in gen.row(x):
            if y in inside:
                entries[(x, y)] = w
    rows = [index[x] for x, _ in entries]
    cols = [index[y] for _, y in entries]
    labels = strongly_connected_labels(len(states), rows, cols)
    r = labels[index[gen.root]]
    keep = [s for s in states if labels[index[s]] == r]
    kept = set(keep)
    sub = {(x, y): w for (x, y), w in entries.items() if x in kept and y in kept}
    if not sub:
        raise EmptyComponent(f"root {gen.root} has no cycle inside a window of {window}")
    return SparseNonnegMatrix(keep, sub)


def parse_tsv(text: str) -> SparseNonnegMatrix:
    """Parse ``x<TAB>y<TAB>weight`` lines; ``#`` starts a comment."""
    triples = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
        x, y, w = (p.strip() for p in parts)
        try:
            wf = float(w)
        except ValueError:
            raise ParseError(f"line {lineno}: weight {w!r} is not a number") from None
        triples.append((x, y, wf))
    if not triples:
        raise ParseError("no entries")
    return build_matrix(triples)


def read_tsv(path) -> SparseNonnegMatrix:
    with open(path, encoding="utf-8") as fh:
        return parse_tsv(fh.read())


def format_tsv(A: SparseNonnegMatrix) -> str:
    lines = [f"{x}\t{y}\t{w!r}" for (x, y), w in sorted(A.entries.items())]
    return "\n".join(lines) + "\n"
