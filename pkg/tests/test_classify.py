import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpos.classify import (
    R_NULL,
    R_TRANSIENT,
    STRONG,
    WEAK,
    classify,
    essential_radius,
    exp_moment_invariance_check,
    exp_moment_positivity,
    rtrans_test,
    strong_rpos_test,
)
from rpos.core import Subgraph, build_matrix
from rpos.exceptions import NotSubprobability
from rpos.models import finite_random, pinning, pinning_beta_c, srw

BC = pinning_beta_c(1.5, 0.5)
ONES = build_matrix([("a", "a", 1), ("a", "b", 1), ("b", "a", 1), ("b", "b", 1)])


@given(st.integers(0, 10**5), st.integers(1, 8))
def test_finite_matrices_strongly_positive(seed, size):
    c = classify(finite_random(seed, size))
    assert c.verdict == STRONG and c.certified
    assert c.gap[0] > 0 and c.psi_at_star[0] <= 1e-9 and c.psi_at_star[1] >= -1e-9


@pytest.mark.parametrize("p", [0.5, 0.3, 0.8])
def test_srw_null_recurrent(p):
    c = classify(srw(p))
    assert c.verdict == R_NULL
    assert c.left_derivative[1] == math.inf
    assert c.lambda_star[1] >= c.lambda_plus[0] - 1e-9


@pytest.mark.parametrize("alpha,factor,verdict", [(1.5, 0.5, R_TRANSIENT), (1.5, 1.0, R_NULL),
                                                  (1.5, 2.0, STRONG), (2.5, 1.0, WEAK)])
def test_pinning_classes(alpha, factor, verdict):
    c = classify(pinning(alpha, 0.5, factor * pinning_beta_c(alpha, 0.5)))
    assert c.verdict == verdict and c.certified


def test_weak_class_evidence():
    c = classify(pinning(2.5, 0.5, pinning_beta_c(2.5, 0.5)))
    lo, hi = c.left_derivative
    assert math.isfinite(hi) and lo <= 1.9473724663 * 1.0 + 1e-6
    # the tilted mean of the excursion law at λ_+ is the ζ(3/2)/ζ(5/2) ratio
    assert hi >= 1.9473724663 - 1e-6


def test_critical_pinning_never_strong():
    for alpha in (1.5, 2.5):
        assert classify(pinning(alpha, 0.5, pinning_beta_c(alpha, 0.5))).verdict in (R_NULL, WEAK)


def test_strong_test_on_ones():
    r = strong_rpos_test(ONES, {("a", "a"): 0.5})
    exact = (1.5 + math.sqrt(4.25)) / 2
    assert r.rho_B[0] <= exact <= r.rho_B[1]
    assert r.strict_change and r.drop > 0 and r.consistent


def test_strong_test_srw_no_drop():
    r = strong_rpos_test(srw(0.5), {("0", "1"): 0.5})
    assert not r.strict_change and r.consistent
    assert r.rho_B[1] >= 1 - 1e-9


def test_strong_test_pinning_drop():
    G = pinning(1.5, 0.5, 2 * BC)
    r = strong_rpos_test(G, {("0", "0"): 0.5})
    assert r.strict_change and r.drop > 0


def test_rtrans_subcritical_pinning():
    G = pinning(1.5, 0.5, BC / 2)
    w = G.weight("0", "0")
    r = rtrans_test(G, {("0", "0"): (w + 0.1) / w})
    assert r.equal and r.epsilon > 0
    assert r.rho_A[0] <= math.exp(-0.5) <= r.rho_A[1]


def test_rtrans_srw_strict_increase():
    r = rtrans_test(srw(0.5), {("0", "1"): 1.5})
    assert not r.equal and r.consistent


def test_rtrans_finite_never_transient():
    A = finite_random(2, 4)
    e = sorted(A.entries)[0]
    r = rtrans_test(A, {e: 1.2})
    assert not r.equal and r.strict_change and r.consistent


def test_essential_radius_finite():
    A = finite_random(3, 4)
    est = essential_radius(A, Subgraph.full(A), deltas=(0.1, 0.01, 0.001))
    assert est.below_rho and est.monotone
    assert est.value == pytest.approx(0.001 * est.rho[1], rel=1e-6)


def test_essential_radius_srw_no_drop():
    edges = [("0", "1"), ("0", "-1"), ("1", "0"), ("-1", "0")]
    est = essential_radius(srw(0.5), edges, deltas=(1e-3,))
    assert not est.below_rho and est.value >= 1 - 1e-6


def test_essential_radius_pinning():
    G = pinning(1.5, 0.5, 2 * BC)
    edges = [(str(k), "0") for k in range(11)]
    est = essential_radius(G, edges, deltas=(1e-3,))
    assert est.below_rho
    assert est.value == pytest.approx(math.exp(-0.5), rel=1e-2)


def test_invariance_strongly_positive_kernel():
    P = finite_random(5, 4).scaled(0.2)
    subs = [Subgraph.point("0"), Subgraph.point("1"), Subgraph(frozenset({"0", "2"}), frozenset())]
    assert all(exp_moment_positivity(P, F)[0] for F in subs)
    assert exp_moment_invariance_check(P, subs[0], subs[2])


def test_invariance_srw_kernel():
    P = srw(0.5)
    a = Subgraph.point("0")
    b = Subgraph(frozenset({"0", "1"}), frozenset())
    assert not exp_moment_positivity(P, a)[0]
    assert not exp_moment_positivity(P, b)[0]
    assert exp_moment_invariance_check(P, a, b)


def test_invariance_requires_subprobability():
    with pytest.raises(NotSubprobability):
        exp_moment_invariance_check(ONES, Subgraph.point("a"), Subgraph.point("b"))
