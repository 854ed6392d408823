"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical routines: dense linear
algebra comes from numpy, series from plain floats or mpmath.
"""
from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np


def dense(A):
    """Dense array and state list of a SparseNonnegMatrix (reads entries only)."""
    states = list(A.states)
    idx = {s: i for i, s in enumerate(states)}
    M = np.zeros((len(states), len(states)))
    for (x, y), w in A.entries.items():
        M[idx[x], idx[y]] = w
    return M, states


def perron_root(M):
    return float(max(abs(np.linalg.eigvals(M))))


def green_dense(M, lam):
    n = M.shape[0]
    return np.linalg.inv(np.eye(n) - math.exp(lam) * M)


def srw_rho_binomial(p, n=10**6):
    """sqrt of the limiting ratio of C(2n,n)(pq)^n, Richardson-extrapolated in 1/n."""
    q = 1.0 - p

    def ratio(k):
        la = math.lgamma(2 * k + 3) - 2 * math.lgamma(k + 2) - math.lgamma(2 * k + 1) + 2 * math.lgamma(k + 1)
        return math.exp(la) * p * q

    r = 2.0 * ratio(2 * n) - ratio(n)
    return math.sqrt(r)


def zeta_em(s, N=2000):
    """Riemann zeta by partial sum plus Euler-Maclaurin remainder."""
    head = math.fsum(m ** -s for m in range(1, N))
    tail = N ** (1 - s) / (s - 1) + 0.5 * N**-s + s * N ** (-s - 1) / 12 - s * (s + 1) * (s + 2) * N ** (-s - 3) / 720
    return head + tail


def pinning_beta_c(alpha, gamma, N=4000):
    Z = math.fsum(m**-alpha * math.exp(-gamma * m) for m in range(1, N))
    return Z / zeta_em(alpha)


def atomic_psi_mp(atoms, lam, dps=50):
    with mpmath.workdps(dps):
        return mpmath.log(mpmath.fsum(mpmath.mpf(w) * mpmath.exp(mpmath.mpf(lam) * m) for m, w in atoms.items()))


def atomic_fd_derivatives(atoms, lam, h=1e-5):
    """Central differences of an mpmath psi (first and second)."""
    with mpmath.workdps(50):
        f = lambda t: atomic_psi_mp(atoms, t)  # noqa: E731
        lam, h = mpmath.mpf(lam), mpmath.mpf(h)
        d1 = (f(lam + h) - f(lam - h)) / (2 * h)
        d2 = (f(lam + h) - 2 * f(lam) + f(lam - h)) / h**2
        return float(d1), float(d2)


def brute_excursions(A, F_vertices, F_edges, x, y, max_len):
    """Weights of excursions by explicit walk enumeration (DFS), grouped by length.

    An excursion from x to y away from F has interior vertices outside F and
    is not a single edge of F.
    """
    succ = {}
    for (u, v), w in A.entries.items():
        succ.setdefault(u, []).append((v, w))
    out = [0.0] * (max_len + 1)

    def dfs(u, length, weight):
        for v, w in succ.get(u, ()):
            L, W = length + 1, weight * w
            if L > max_len:
                continue
            if v == y and not (L == 1 and (x, y) in F_edges):
                out[L] += W
            if v not in F_vertices:
                dfs(v, L, W)

    dfs(x, 0, 1.0)
    return out


def random_weights(rng, n, density=0.6):
    """Random irreducible weight matrix as triples (Hamiltonian cycle plus extras)."""
    perm = rng.permutation(n)
    triples = {}
    for i in range(n):
        a, b = perm[i], perm[(i + 1) % n]
        triples[(str(a), str(b))] = float(rng.uniform(0.1, 2.0))
    for a, b in itertools.product(range(n), repeat=2):
        if rng.random() < density:
            triples[(str(a), str(b))] = float(rng.uniform(0.1, 2.0))
    return [(a, b, w) for (a, b), w in triples.items()]
