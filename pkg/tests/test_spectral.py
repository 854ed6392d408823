import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from rpos.classify import apply_changes
from rpos.core import build_matrix, truncate
from rpos.exceptions import InequalityFails
from rpos.excursion import psi_value
from rpos.models import finite_random, srw
from rpos.spectral import green, rho_bisect, rho_lower, rho_upper

LOOP2 = build_matrix([("a", "a", 2)])
CYCLE = build_matrix([("0", "1", 1), ("1", "0", 1)])


def test_rho_lower_trivial():
    assert rho_lower(LOOP2, "a", 5) == pytest.approx(2.0)
    assert rho_lower(CYCLE, "0", 2) == pytest.approx(1.0)


def test_rho_lower_srw_window():
    # (A^n(0,0))^{1/n} on the window equals (C(n,n/2)(pq)^{n/2})^{1/n} up to the
    # mass of walks leaving the window; the polynomial prefactor keeps it ~2e-3 below ρ
    p, n = 0.3, 2000
    T = truncate(srw(p), 200)
    k = n // 2
    log_diag = math.lgamma(n + 1) - 2 * math.lgamma(k + 1) + k * math.log(p * (1 - p))
    oracle = math.exp(log_diag / n)
    low = rho_lower(T, "0", n)
    assert low == pytest.approx(oracle, abs=1e-7)
    assert low < 2 * math.sqrt(p * (1 - p))


def test_rho_upper_trivial():
    assert rho_upper(LOOP2, {"a": 1.0}, 2.0)
    assert rho_upper(CYCLE, {"0": 1.0, "1": 1.0}, 1.0)
    with pytest.raises(InequalityFails):
        rho_upper(LOOP2, {"a": 1.0}, 1.9)


def test_rho_upper_srw_window():
    p, q = 0.3, 0.7
    T = truncate(srw(p), 41)
    h = {x: (q / p) ** (int(x) / 2) for x in T.states}
    assert rho_upper(T, h, 2 * math.sqrt(p * q) + 1e-12)


def test_rho_bisect_examples():
    a = 1.7
    e = rho_bisect(build_matrix([("z", "z", a)]))
    assert e.lower <= a <= e.upper
    e = rho_bisect(build_matrix([("a", "a", 1), ("a", "b", 1), ("b", "a", 1), ("b", "b", 1)]))
    assert e.rho == pytest.approx(2.0, abs=1e-10)
    e = rho_bisect(build_matrix([("a", "a", 0.5), ("a", "b", 1), ("b", "a", 1), ("b", "b", 1)]))
    assert e.rho == pytest.approx((1.5 + math.sqrt(4.25)) / 2, abs=1e-8)


def test_green_loop_geometric():
    lam = -1.2
    g = green(LOOP2, lam, "a", "a")
    assert g.value == pytest.approx(1 / (1 - 2 * math.exp(lam)), rel=1e-12)


def test_green_diverges_above_radius():
    assert not green(CYCLE, 0.1, "0", "0").finite


def test_green_diagonal_identity_random():
    A = finite_random(3, 4)
    M, _ = oracles.dense(A)
    ls = -math.log(oracles.perron_root(M))
    for d in (0.1, 0.5, 1.5):
        lam = ls - d
        g = green(A, lam, "0", "0").value
        assert g * (1 - math.exp(psi_value(A, "0", lam).psi)) == pytest.approx(1.0, abs=1e-10)
        assert g == pytest.approx(oracles.green_dense(M, lam)[0, 0], rel=1e-10)
    assert not green(A, ls + 0.01, "0", "0").finite


@given(st.integers(0, 10**5), st.integers(1, 7))
def test_sandwich_and_reference_independence(seed, size):
    A = finite_random(seed, size)
    est = rho_bisect(A, tol=1e-11)
    assert est.upper - est.lower <= 1e-10
    assert rho_lower(A, "0", 4 * A.period) <= est.upper * (1 + 1e-12)
    rs = A.row_sums()
    assert est.lower <= max(rs.values()) * (1 + 1e-12)
    assert abs(est.rho - oracles.perron_root(oracles.dense(A)[0])) < 1e-8
    for z in A.states:
        assert abs(rho_bisect(A, z, tol=1e-11).rho - est.rho) < 1e-8


@given(st.integers(0, 10**5), st.integers(2, 6), st.floats(0.05, 0.95))
def test_monotone_under_domination(seed, size, f):
    A = finite_random(seed, size)
    e = sorted(A.entries)[seed % len(A.entries)]
    B = apply_changes(A, {e: f})
    assert rho_bisect(B, tol=1e-11).lower <= rho_bisect(A, tol=1e-11).upper
