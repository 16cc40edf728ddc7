import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from penalized_hmm.chain import (
    InvalidRegime,
    Reducible,
    c_normalizer,
    covariate_kernels,
    covariate_rates,
    covariate_series,
    covariate_transform,
    is_valid_ptm_regime,
    ptm_from_covariates,
    ptm_from_rates,
    ptm_matrix,
    stationary_distribution,
    transition_counts,
    update_dirichlet_rows,
)
from penalized_hmm.core import CovariateParams, SwitchRates
from penalized_hmm.simulate import REFERENCE_P


def test_transition_counts_by_hand():
    path = np.array([0, 0, 1, 1, 1, 0])
    np.testing.assert_array_equal(transition_counts(path, 2), [[1, 1], [1, 2]])


def test_dirichlet_sticky_row_without_departures(rng):
    path = np.zeros(500, dtype=int)
    theta = np.array([[120000.0, 1.0], [1.0, 120000.0]])
    draws = np.array([update_dirichlet_rows(path, theta, rng).P[0, 0] for _ in range(2000)])
    assert draws.mean() == pytest.approx((120000 + 499) / (120000 + 499 + 1), abs=1e-5)


def test_dirichlet_alternating_path_moments(rng):
    path = np.arange(101) % 2
    # 50 moves 0->1, 50 moves 1->0, no stays
    np.testing.assert_array_equal(transition_counts(path, 2), [[0, 50], [50, 0]])
    n = 100000
    p12 = np.array([update_dirichlet_rows(path, np.ones((2, 2)), rng).P[0, 1] for _ in range(n)])
    a, b = 51.0, 1.0
    mean = a / (a + b)
    var = a * b / ((a + b) ** 2 * (a + b + 1))
    assert mean == pytest.approx(51 / 52)
    assert abs(p12.mean() - mean) < 3 * math.sqrt(var / n)


def test_dirichlet_recovers_reported_standard_kernel(rng):
    from penalized_hmm.core import EmissionParams
    from penalized_hmm.simulate import simulate_series

    P = REFERENCE_P["standard_2state"]
    P = P / P.sum(axis=1, keepdims=True)
    _, path = simulate_series(EmissionParams(0.006, [0.044]), P, [0.5, 0.5], 200000, seed=5)
    theta = np.array([[1.0, 1.0], [1.0, 1.0]])
    draws = np.array([update_dirichlet_rows(path, theta, rng).P[0, 0] for _ in range(500)])
    assert draws.mean() == pytest.approx(0.9857, abs=0.005)


def test_ptm_identity_without_switching():
    np.testing.assert_array_equal(ptm_matrix(np.zeros((2, 2))), np.eye(2))


def test_ptm_reported_rates():
    P = ptm_from_rates(SwitchRates.two_state(0.00142, 0.00422)).P
    np.testing.assert_allclose(P, [[0.9986, 0.0014], [0.0042, 0.9958]], atol=5e-5)


def test_ptm_three_state_row_high_precision():
    mpmath.mp.dps = 40
    g = np.array([[0, 0.001, 0.002], [0.01, 0, 0.02], [0.003, 0.004, 0]])
    P = ptm_matrix(g)
    decay = mpmath.exp(-mpmath.mpf("0.003"))
    assert P[0, 1] == pytest.approx(float(mpmath.mpf("0.001") * decay), rel=1e-14)
    assert P[0, 2] == pytest.approx(float(mpmath.mpf("0.002") * decay), rel=1e-14)


def test_validity_regime_examples():
    assert is_valid_ptm_regime(SwitchRates.two_state(50.0, 3.0), 1.0)
    assert not is_valid_ptm_regime(np.array([[0.0, 10.0], [0.0, 0.0]]), 0.1)
    assert is_valid_ptm_regime(np.zeros((3, 3)), 1e-6)
    with pytest.raises(InvalidRegime):
        ptm_from_rates(SwitchRates(np.array([[0.0, 10.0], [1.0, 0.0]])), 0.1)


rate_mats = st.integers(2, 3).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(0.0, 1e3, allow_subnormal=False))
)


@settings(max_examples=300, deadline=None)
@given(rate_mats)
def test_ptm_valid_for_unit_interval_and_any_rates(g):
    P = ptm_from_rates(SwitchRates(g), 1.0).P
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_covariate_null_beta_is_constant_kernel():
    mu = np.log(np.array([[0, 0.00142], [0.00422, 0]]) + np.eye(2))
    params = CovariateParams(mu, np.zeros((2, 2)), 0.7)
    K = covariate_kernels(params, np.array([0.0, 1.0, 60.0, 1e6]))
    want = ptm_from_rates(SwitchRates.two_state(0.00142, 0.00422)).P
    for k in K:
        np.testing.assert_allclose(k, want, rtol=1e-14)


def test_covariate_entry_instant():
    mu = np.full((2, 2), -6.0)
    beta = np.array([[0.0, 0.8], [-0.4, 0.0]])
    for alpha in (-2.0, 0.0, 0.093, 3.0):
        params = CovariateParams(mu, beta, alpha)
        assert covariate_transform(0.0, alpha) == 1.0
        g = covariate_rates(params, 0.0)
        assert g[0, 1] == pytest.approx(math.exp(-6.0 + 0.8))
        assert g[1, 0] == pytest.approx(math.exp(-6.0 - 0.4))


def test_covariate_rate_high_precision():
    mpmath.mp.dps = 40
    mu_lh, beta_lh, alpha = math.log(0.00087), -0.333, 0.093
    params = CovariateParams(np.array([[0.0, mu_lh], [0.0, 0.0]]), np.array([[0.0, beta_lh], [0.0, 0.0]]), alpha)
    f = 1 / (mpmath.mpf(60) ** mpmath.mpf(alpha) + 1)
    want = mpmath.exp(mpmath.mpf(mu_lh) + mpmath.mpf(beta_lh) * f)
    assert covariate_rates(params, 60.0)[0, 1] == pytest.approx(float(want), rel=1e-13)
    P = ptm_from_covariates(params, 60.0).P
    assert P[0, 1] == pytest.approx(float(want * mpmath.exp(-want)), rel=1e-13)


def test_covariate_series_elapsed_time():
    w = covariate_series([100], 200)
    assert w[99] == 0.0
    assert w[159] == 60.0
    assert w[0] == 1e6
    assert w[98] == 98 + 1e6
    w_inv = covariate_series([3], 5, transform="inverse")
    assert np.isinf(w_inv[2]) and w_inv[4] == 0.5
    with pytest.raises(ValueError):
        covariate_series([5, 3], 10)


def test_no_entrances_recovers_covariate_free_kernel():
    w = covariate_series(None, 500)
    mu = np.log(np.array([[1.0, 0.00142], [0.00422, 1.0]]))
    params = CovariateParams(mu, np.full((2, 2), 1.5), 1.0)
    assert np.all(covariate_transform(w, 1.0) < 1.1e-6)
    want = ptm_from_rates(SwitchRates(np.exp(mu))).P
    np.testing.assert_allclose(covariate_kernels(params, w), np.broadcast_to(want, (500, 2, 2)), atol=1e-8)


def test_c_normalizer_cases():
    w = covariate_series([1, 40, 90], 120)
    assert c_normalizer(0.0, w, 0.5) == 1.0
    assert c_normalizer(2.0, np.zeros(50), 1.3) == pytest.approx(math.e**2)
    f = covariate_transform(w, 0.5)
    want = math.fsum(math.exp(-1.7 * v) for v in f) / len(f)
    assert c_normalizer(-1.7, w, 0.5) == pytest.approx(want, rel=1e-13)


def test_stationary_identity_is_reducible():
    with pytest.raises(Reducible):
        stationary_distribution(np.eye(2))


@pytest.mark.parametrize(
    "name, want",
    [
        ("standard_2state", (0.5, 0.5)),
        ("penalized_2state", (0.75, 0.25)),
        ("penalized_3state", (0.684, 0.153, 0.163)),
    ],
)
def test_stationary_reported_kernels(name, want):
    np.testing.assert_allclose(stationary_distribution(REFERENCE_P[name]), want, atol=0.01)


def test_stationary_rejects_non_stochastic():
    with pytest.raises(ValueError):
        stationary_distribution(np.array([[0.5, 0.6], [0.5, 0.5]]))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(0.01, 1.0)))
def test_stationary_solves_balance(W):
    P = W / W.sum(axis=1, keepdims=True)
    d = stationary_distribution(P)
    np.testing.assert_allclose(d @ P, d, atol=1e-12)
    assert d.sum() == pytest.approx(1.0)
