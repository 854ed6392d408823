import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from rpos.core import Subgraph, build_matrix, truncate
from rpos.exceptions import BadParameter, LimitExceeded, ParseError
from rpos.excursion import excursion_gf
from rpos.models import (
    ModelSpec,
    birth_death,
    dense_power_diag,
    enumerate_excursions,
    excursion_tail_bound,
    finite_random,
    pinning,
    pinning_beta_c,
    srw,
)
from rpos.spectral import rho_bisect


def test_srw_half_radius_one():
    e = rho_bisect(srw(0.5), tol=1e-9)
    assert e.lower <= 1.0 <= e.upper + 1e-12


def test_srw_point_three():
    e = rho_bisect(srw(0.3), tol=1e-9)
    assert e.lower <= oracles.srw_rho_binomial(0.3) + 1e-10 and oracles.srw_rho_binomial(0.3) - 1e-10 <= e.upper


def test_pinning_radius():
    gamma = 0.5
    bc = pinning_beta_c(1.5, gamma)
    for beta in (bc / 2, bc):
        e = rho_bisect(pinning(1.5, gamma, beta), tol=1e-9)
        assert e.lower - 1e-12 <= math.exp(-gamma) <= e.upper + 1e-12
    # above β_c, λ_* solves φ_0(λ) = 1; check by direct summation
    e = rho_bisect(pinning(1.5, gamma, 2 * bc), tol=1e-12)
    lam = -math.log(e.rho)
    Z = math.fsum(m**-1.5 * math.exp(-gamma * m) for m in range(1, 4000))
    phi = 2 * bc / Z * math.fsum(m**-1.5 * math.exp((lam - gamma) * m) for m in range(1, 200000))
    assert phi == pytest.approx(1.0, abs=1e-6)


def test_beta_c_oracle_and_monotone():
    assert pinning_beta_c(1.5, 0.5) == pytest.approx(oracles.pinning_beta_c(1.5, 0.5), rel=1e-9)
    vals = [pinning_beta_c(1.5, g) for g in (0.1, 0.3, 0.6, 1.0, 2.0)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_srw_maximal_at_half():
    rhos = {p: rho_bisect(srw(p), tol=1e-9).rho for p in (0.1, 0.3, 0.5, 0.7, 0.9)}
    assert max(rhos, key=rhos.get) == 0.5


def test_bad_parameters():
    with pytest.raises(BadParameter):
        srw(1.0)
    with pytest.raises(BadParameter):
        pinning(1.0, 0.5, 1.0)


def test_finite_random_determinism():
    A, B = finite_random(1, 2, density=1), finite_random(1, 2, density=1)
    assert A.entries == B.entries and len(A.entries) == 4
    assert finite_random(4, 1).n == 1


def test_two_cycle_enumeration():
    A = build_matrix([("0", "1", 0.3), ("1", "0", 0.8)])
    parts = dict(enumerate_excursions(A, Subgraph.point("0"), "0", "0", 8))
    assert parts[2] == pytest.approx(0.24) and sum(v for k, v in parts.items() if k != 2) == 0


def test_loop_outside_subgraph():
    A = build_matrix([("z", "z", 1.3)])
    parts = dict(enumerate_excursions(A, Subgraph.point("z"), "z", "z", 3))
    assert parts[1] == pytest.approx(1.3)


def test_enumeration_matches_dfs_and_converges():
    A = finite_random(9, 4)
    F = Subgraph.point("0")
    lam = -math.log(oracles.perron_root(oracles.dense(A)[0])) - 0.4
    val = excursion_gf(A, F, "0", "0", lam).value
    ref = oracles.brute_excursions(A, F.vertices, F.edges, "0", "0", 10)
    dp = dict(enumerate_excursions(A, F, "0", "0", 10))
    assert all(dp.get(m, 0.0) == pytest.approx(ref[m], rel=1e-12, abs=1e-300) for m in range(1, 11))
    gaps = []
    for L in (6, 12, 24):
        partial = math.fsum(w * math.exp(lam * m) for m, w in enumerate_excursions(A, F, "0", "0", L, limit=24))
        gaps.append(val - partial)
        assert partial <= val * (1 + 1e-12)
        assert val - partial <= excursion_tail_bound(A, F, "0", "0", lam, L) * (1 + 1e-9)
    assert gaps[0] > gaps[1] > gaps[2] >= -1e-15


def test_dense_power_diag():
    assert dense_power_diag(build_matrix([("z", "z", 2)]), "z", 10) == pytest.approx(1024)
    assert dense_power_diag(build_matrix([("0", "1", 0.5), ("1", "0", 3)]), "0", 6) == pytest.approx(1.5**3)
    with pytest.raises(LimitExceeded):
        dense_power_diag(build_matrix([("z", "z", 2)]), "z", 2**21)


@given(st.integers(0, 10**4), st.integers(1, 6))
def test_dense_power_diag_matches_numpy(n, seed):
    A = finite_random(seed, 3)
    M, states = oracles.dense(A)
    n = n % 7
    assert dense_power_diag(A, states[0], n) == pytest.approx(np.linalg.matrix_power(M, n)[0, 0], rel=1e-12)


def test_truncations_are_lower_bounds():
    G = pinning(1.5, 0.5, 2 * pinning_beta_c(1.5, 0.5))
    exact = rho_bisect(G, tol=1e-10)
    prev = 0.0
    for w in (10, 40, 160):
        r = rho_bisect(truncate(G, w), "0", tol=1e-12).upper
        assert prev - 1e-12 <= r <= exact.upper + 1e-12
        prev = r


def test_birth_death_generator_rows():
    G = birth_death(0.3, 0.6)
    assert G.weight("1", "2") == pytest.approx(0.3) and G.weight("1", "0") == pytest.approx(0.6)
    assert G.measure is None


def test_model_spec_round_trip():
    s = ModelSpec.from_json('{"family": "pinning", "alpha": 1.5, "gamma": 0.5, "beta_factor": 2}')
    assert ModelSpec.from_json(s.to_json()) == s
    assert s.build().params["beta_c"] == pytest.approx(pinning_beta_c(1.5, 0.5))


@pytest.mark.parametrize("text", ['{"family": "nope"}', '{"family": "srw"}', '{"family": "srw", "p": "x"}',
                                  '{"family": "srw", "p": 0.3, "q": 1}', "[1]", "{",
                                  '{"family": "pinning", "alpha": 1.5, "gamma": 0.5, "beta": 1, "beta_factor": 2}'])
def test_model_spec_errors(text):
    with pytest.raises((ParseError, BadParameter)):
        ModelSpec.from_json(text).build()
