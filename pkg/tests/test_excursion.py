import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from rpos.core import Subgraph, build_matrix
from rpos.exceptions import NoSignChange
from rpos.excursion import (
    GfValue,
    excursion_gf,
    excursion_table,
    full_table,
    psi_profile,
    psi_value,
    remove_edge,
    remove_vertex,
)
from rpos.models import enumerate_excursions, excursion_tail_bound, finite_random, pinning, pinning_beta_c, srw


def test_gfvalue_infinity_absorbs():
    inf, one = GfValue.inf(), GfValue.from_float(1.0)
    assert (inf + one).kind == "inf" and (inf * one).kind == "inf"
    assert (GfValue.zero() * inf).kind == "zero"


def test_remove_loop_edge():
    A = build_matrix([("a", "a", 2)])
    t = remove_edge(full_table(A, 0.3), ("a", "a"))
    assert t["a", "a"].value == pytest.approx(2 * math.exp(0.3))


def test_remove_edge_leaves_other_entry():
    A = build_matrix([("a", "b", 1.5), ("b", "a", 0.7)])
    t = full_table(A, -0.2)
    t2 = remove_edge(t, ("a", "b"))
    assert t2["b", "a"].value == pytest.approx(t["b", "a"].value)


def test_remove_vertex_without_loop():
    A = build_matrix([("a", "b", 2), ("b", "c", 3), ("c", "a", 5)])
    F = Subgraph(frozenset("abc"), frozenset())
    lam = -0.4
    t = remove_vertex(excursion_table(A, F, lam), "b")
    assert t["a", "c"].value == pytest.approx(6 * math.exp(2 * lam))


def test_unit_loop_value_diverges():
    # φ_{b,b} = 1 exactly at λ = 0: the geometric series through b diverges
    A = build_matrix([("a", "b", 1), ("b", "b", 1), ("b", "a", 1)])
    t = remove_vertex(excursion_table(A, Subgraph(frozenset("ab"), frozenset()), 0.0), "b")
    assert t["a", "a"].kind == "inf" and t["a", "a"].boundary


def test_vertex_removal_matches_enumeration():
    A = finite_random(21, 4, density=0.6)
    M, _ = oracles.dense(A)
    lam = -math.log(oracles.perron_root(M)) - 0.7
    F = Subgraph(frozenset({"0", "1"}), frozenset())
    for x in "01":
        for y in "01":
            val = excursion_gf(A, F, x, y, lam).value
            parts = oracles.brute_excursions(A, F.vertices, F.edges, x, y, 14)
            partial = math.fsum(w * math.exp(lam * m) for m, w in enumerate(parts))
            assert partial <= val * (1 + 1e-12)
            assert val - partial <= excursion_tail_bound(A, F, x, y, lam, 14) + 1e-15


def test_single_loop_psi():
    A = build_matrix([("z", "z", 3.0)])
    for lam in (-2.0, -0.5, 0.4):
        assert psi_value(A, "z", lam).psi == pytest.approx(lam + math.log(3.0))


def test_two_cycle_only_excursion():
    p, q = 0.3, 1.7
    A = build_matrix([("0", "1", p), ("1", "0", q)])
    for lam in (-1.0, 0.0, 0.5):
        assert psi_value(A, "0", lam).value == pytest.approx(p * q * math.exp(2 * lam))
    assert enumerate_excursions(A, Subgraph.point("0"), "0", "0", 6)[1] == (2, pytest.approx(p * q))


def test_order_permutation_invariance():
    A = finite_random(5, 5)
    F = Subgraph.point("0")
    rest = [s for s in A.states if s != "0"]
    a = excursion_gf(A, F, "0", "0", -1.5)
    b = excursion_gf(A, F, "0", "0", -1.5, order=rest[::-1])
    assert b.value == pytest.approx(a.value, rel=1e-12)


def test_single_loop_profile():
    A = build_matrix([("z", "z", 2.0)])
    prof = psi_profile(A, "z", np.linspace(-2, 1, 13))
    lo, hi = prof.lambda_star
    assert lo <= -math.log(2) <= hi and prof.lambda_plus_infinite


def test_srw_profile_boundary():
    prof = psi_profile(srw(0.5), "0", np.linspace(-1, 0.5, 16))
    assert prof.lambda_star[1] >= 0 >= prof.lambda_star[0] - 1e-9
    assert prof.lambda_plus[0] == pytest.approx(0.0, abs=1e-9)
    last = prof.samples[10]
    assert last.lo == pytest.approx(0.0, abs=1e-9)


def test_srw_psi_matches_catalan_series():
    # first-return series Σ C_{n-1} (1/4)^n e^{2λn} from the Catalan recursion
    lam = -0.3
    c, total = 1.0, 0.0
    for n in range(1, 400):
        total += 2 * c * 0.25**n * math.exp(2 * lam * n)
        c = c * 2 * (2 * n - 1) / (n + 1)
    prof = psi_profile(srw(0.5), "0", [lam, 0.5])
    s = prof.samples[0]
    assert s.lo - 1e-12 <= math.log(total) <= s.hi + 1e-12
    assert math.log(1 - math.sqrt(1 - math.exp(2 * lam))) == pytest.approx(math.log(total), rel=1e-12)


def test_supercritical_pinning_has_gap():
    G = pinning(1.5, 0.5, 2 * pinning_beta_c(1.5, 0.5))
    prof = psi_profile(G, "0", np.linspace(-1, 0.5, 16))
    assert prof.lambda_star[1] < prof.lambda_plus[0]


def test_no_sign_change_raises():
    A = build_matrix([("z", "z", 2.0)])
    with pytest.raises(NoSignChange):
        psi_profile(A, "z", [0.0, 0.5])


@given(st.integers(0, 10**5), st.integers(1, 6))
def test_psi_monotone_and_convex(seed, size):
    A = finite_random(seed, size)
    M, _ = oracles.dense(A)
    ls = -math.log(oracles.perron_root(M))
    grid = ls + np.linspace(-3, 0.9, 14)
    vals = [psi_value(A, "0", lam) for lam in grid]
    fin = [(lam, v.psi) for lam, v in zip(grid, vals) if v.kind == "finite"]
    assert all(b[1] > a[1] for a, b in zip(fin, fin[1:]))
    for (l1, p1), (l2, p2) in zip(fin, fin[2:]):
        mid = psi_value(A, "0", (l1 + l2) / 2).psi
        assert mid <= (p1 + p2) / 2 + 1e-9
    # crossing happens at λ_*
    assert psi_value(A, "0", ls - 1e-6).psi < 0


@given(st.integers(0, 10**5), st.integers(2, 5))
def test_elimination_dominates_partial_sums(seed, size):
    A = finite_random(seed, size)
    M, _ = oracles.dense(A)
    lam = -math.log(oracles.perron_root(M)) - 0.5
    F = Subgraph.point("0")
    val = excursion_gf(A, F, "0", "0", lam).value
    sums = np.cumsum([w * math.exp(lam * m) for m, w in enumerate(oracles.brute_excursions(A, F.vertices, F.edges, "0", "0", 10))])
    assert np.all(np.diff(sums) >= 0) and sums[-1] <= val * (1 + 1e-12)
