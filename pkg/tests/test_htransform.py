import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from rpos.core import build_matrix
from rpos.exceptions import NotRTransient, NotStronglyPositiveRecurrent
from rpos.htransform import (
    doob_transform,
    excessive_function,
    lyapunov_certificate,
    pf_eigenpair,
    simulate_returns,
    strictly_excessive,
    verify_certificate,
)
from rpos.models import finite_random, pinning, pinning_beta_c, srw
from rpos.spectral import rho_bisect

BC = pinning_beta_c(1.5, 0.5)
CYCLE2 = build_matrix([("0", "1", 2), ("1", "0", 2)])
SWAP = build_matrix([("0", "1", 1), ("1", "0", 1)])


def test_symmetric_eigenpair():
    e = pf_eigenpair(CYCLE2)
    assert e.c == pytest.approx(2.0) and e.h == pytest.approx({"0": 1.0, "1": 1.0})


def test_two_by_two_eigenpair():
    A = build_matrix([("0", "0", 1), ("0", "1", 2), ("1", "0", 3), ("1", "1", 1)])
    e = pf_eigenpair(A)
    assert e.c == pytest.approx(1 + math.sqrt(6), abs=1e-12)
    assert e.h["1"] == pytest.approx(math.sqrt(6) / 2, rel=1e-10)


def test_eigenpair_matches_bisection():
    for seed in range(30):
        A = finite_random(seed, 2 + seed % 7)
        assert abs(pf_eigenpair(A).c - rho_bisect(A, tol=1e-12).rho) < 1e-8


def test_transform_examples():
    K = doob_transform(CYCLE2, {"0": 1.0, "1": 1.0}, 2.0)
    assert K.kernel.entries == {("0", "1"): 1.0, ("1", "0"): 1.0}
    K = doob_transform(build_matrix([("z", "z", 3.0)]), {"z": 1.0}, 3.0)
    assert K.kernel.entries == {("z", "z"): 1.0}


def test_transform_power_identity():
    A = finite_random(8, 5)
    K = doob_transform(A)
    M, states = oracles.dense(A)
    P, pstates = oracles.dense(K.kernel)
    assert pstates == states
    for n in range(1, 11):
        lhs = np.diag(np.linalg.matrix_power(P, n)) * K.c**n
        assert np.allclose(lhs, np.diag(np.linalg.matrix_power(M, n)), rtol=1e-10)


@given(st.integers(0, 10**5), st.integers(1, 7))
def test_transform_is_stochastic_with_radius_one(seed, size):
    A = finite_random(seed, size)
    K = doob_transform(A)
    assert all(abs(s - 1) < 1e-12 for s in K.kernel.row_sums().values())
    assert set(K.kernel.entries) == set(A.entries)
    e = rho_bisect(K.kernel, tol=1e-10)
    assert e.lower - 1e-8 <= 1.0 <= e.upper + 1e-8


@given(st.integers(0, 10**5), st.integers(2, 6), st.integers(0, 2**31))
def test_eigenvector_unique_from_random_starts(seed, size, s2):
    A = finite_random(seed, size)
    rng = np.random.default_rng(s2)
    h1 = pf_eigenpair(A, start=rng.uniform(0.1, 1, size)).h
    h2 = pf_eigenpair(A, start=rng.uniform(0.1, 1, size)).h
    for x in A.states:
        assert h1[x] == pytest.approx(h2[x], rel=1e-8)


def test_excessive_scalar():
    a = 1.5
    lam = -math.log(2 * a)
    h = excessive_function(build_matrix([("z", "z", a)]), "z", lam)
    assert h["z"] == pytest.approx(2.0)
    assert a * h["z"] == pytest.approx(math.exp(-lam) * (h["z"] - 1))


def test_excessive_two_cycle():
    lam = -0.3
    h = excessive_function(SWAP, "0", lam)
    assert h["1"] == pytest.approx(math.exp(-lam) * (h["0"] - 1), rel=1e-10)
    assert h["0"] == pytest.approx(math.exp(-lam) * h["1"], rel=1e-10)


def test_excessive_subcritical_pinning():
    G = pinning(1.5, 0.5, BC / 2)
    h = excessive_function(G, "0", 0.5)
    vals = [h[str(k)] for k in range(30)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("S", [["0"], ["0", "1"]])
def test_strictly_excessive_pinning(S):
    G = pinning(1.5, 0.5, BC / 2)
    rho = math.exp(-0.5)
    h = strictly_excessive(G, S)
    for x in S:
        Ah = math.fsum(w * h[y] for y, w in G.row(x))
        assert Ah < rho * h[x]


def test_strictly_excessive_rejects_srw():
    with pytest.raises(NotRTransient):
        strictly_excessive(srw(0.5), ["0"])


def test_certificate_two_cycle():
    K = doob_transform(SWAP)
    cert = lyapunov_certificate(K, ["0"], margin=0.0)
    assert cert.eps >= 0.29 and verify_certificate(K, cert)
    assert cert.rho_Q[0] <= math.sqrt(0.5) <= cert.rho_Q[1]
    default = lyapunov_certificate(K, ["0"])
    assert 0 < default.eps < cert.eps and verify_certificate(K, default)


def test_certificate_pinning():
    K = doob_transform(pinning(1.5, 0.5, 2 * BC))
    cert = lyapunov_certificate(K, ["0"], window=40)
    assert cert.eps > 0 and verify_certificate(K, cert)
    assert cert.eps == pytest.approx(0.9 * (1 - cert.rho_Q[1]), rel=1e-2)


def test_certificate_fails_on_srw():
    with pytest.raises(NotStronglyPositiveRecurrent):
        lyapunov_certificate(doob_transform(srw(0.5)), ["0"])


def test_verify_rejects_inflated_eps():
    K = doob_transform(SWAP)
    cert = lyapunov_certificate(K, ["0"])
    from dataclasses import replace

    assert not verify_certificate(K, replace(cert, eps=0.9))


def test_simulate_swap_is_deterministic_return():
    K = doob_transform(SWAP)
    fit = simulate_returns(K, "0", seed=1, n_samples=500, horizon=100, eps=[0.3])
    assert fit.censored == 0 and fit.mean_uncensored == 2.0
    assert fit.moments[0.3] == pytest.approx(math.exp(0.6))


def test_simulate_reproducible():
    K = doob_transform(pinning(1.5, 0.5, 2 * BC))
    a = simulate_returns(K, "0", seed=5, n_samples=2000)
    b = simulate_returns(K, "0", seed=5, n_samples=2000)
    assert a == b


def test_simulate_srw_heavy_tail():
    # P(σ > 10^6) is about 8e-4, so 10^4 samples leave several censored
    fit = simulate_returns(doob_transform(srw(0.5)), "0", seed=2, n_samples=10_000)
    assert fit.heavy_tail and fit.censored > 0
