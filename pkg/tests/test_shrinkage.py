import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from oracles import bisect_cernn_root, cnr_grid_search, cnr_objective

from cernn.errors import InvalidInputError, UnderdeterminedError
from cernn.shrinkage import (
    CernnParams,
    alpha_hat,
    cernn_eigenvalue,
    cernn_estimate,
    cernn_map,
    cnr_eigenvalues,
    cnr_estimate,
    lambda_max_bound,
    linear_shrinkage,
    lw_estimate,
    prior_mode,
    sample_estimate,
)
from cernn.spectral import condition_number, eig_sym, sample_covariance

FIG2 = np.array([13.29, 5.73, 1.51, 0.55, 0.44])

d_st = st.floats(1e-4, 1e4)
n_st = st.floats(1.0, 1e5)
lam_st = st.floats(1e-6, 1e6)
alpha_st = st.floats(0.01, 0.99)


def _random_spd(rng, p, spread=3.0):
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    return (q * np.exp(rng.uniform(-spread, spread, p))) @ q.T


# --- parameters ---------------------------------------------------------------


@pytest.mark.parametrize("kw", [dict(n=-1, lam=1, alpha=0.5), dict(n=1, lam=-1, alpha=0.5),
                                dict(n=1, lam=1, alpha=0.0), dict(n=1, lam=1, alpha=1.0)])
def test_params_validation(kw):
    with pytest.raises(InvalidInputError):
        CernnParams(**kw)


def test_params_mode():
    assert CernnParams(3, 1, 0.2).mode == pytest.approx(2.0)


# --- eigenvalue map -------------------------------------------------------------


def test_no_data_returns_prior_mode():
    assert cernn_eigenvalue(5.0, CernnParams(0, 3.0, 0.5)) == 1.0
    assert cernn_eigenvalue(5.0, CernnParams(0, 3.0, 0.2)) == math.sqrt(0.8 / 0.2)


def test_zero_penalty_returns_d_exactly():
    assert cernn_eigenvalue(7.3, CernnParams(4, 0, 0.5)) == 7.3


def test_no_data_and_no_penalty_is_underdetermined():
    with pytest.raises(UnderdeterminedError):
        cernn_eigenvalue(1.0, CernnParams(0, 0, 0.5))


def test_fixed_point_at_prior_mode():
    for alpha in (0.1, 0.5, 0.9):
        m = prior_mode(alpha)
        for n, lam in [(1, 1e-3), (10, 5), (1e5, 1e6)]:
            assert cernn_eigenvalue(m, CernnParams(n, lam, alpha)) == pytest.approx(m, rel=1e-12)


def test_hand_example_against_bisection():
    # lam*alpha = 2.5, n d + lam (1 - alpha) = 42.5
    e = cernn_eigenvalue(4.0, CernnParams(10, 5, 0.5))
    assert 2.5 * e * e + 10 * e - 42.5 == pytest.approx(0.0, abs=1e-12)
    assert e == pytest.approx(float(bisect_cernn_root(4.0, 10, 5, 0.5)), rel=1e-12)


def test_rejects_negative_eigenvalues():
    with pytest.raises(InvalidInputError):
        cernn_eigenvalue(-1.0, CernnParams(1, 1, 0.5))


def test_vector_input_returns_array():
    out = cernn_eigenvalue([1.0, 2.0], CernnParams(1, 1, 0.5))
    assert isinstance(out, np.ndarray) and out.shape == (2,)


def test_stable_root_for_tiny_penalty():
    # the textbook formula cancels catastrophically here
    e = cernn_eigenvalue(2.0, CernnParams(1e5, 1e-9, 0.5))
    assert e == pytest.approx(2.0 + 1e-9 * 0.5 / 1e5, rel=1e-14)


@settings(max_examples=300, deadline=None)
@given(d_st, n_st, lam_st, alpha_st)
def test_stationarity_and_oracle(d, n, lam, alpha):
    e = cernn_eigenvalue(d, CernnParams(n, lam, alpha))
    assert abs(n / e - (n * d + lam * (1 - alpha)) / e**2 + lam * alpha) <= 1e-8 * n
    assert e == pytest.approx(float(bisect_cernn_root(d, n, lam, alpha)), rel=1e-10)


@settings(max_examples=300, deadline=None)
@given(d_st, n_st, lam_st, alpha_st)
def test_betweenness(d, n, lam, alpha):
    m = prior_mode(alpha)
    assume(abs(d - m) > 1e-9 * m)
    e = cernn_eigenvalue(d, CernnParams(n, lam, alpha))
    lo, hi = min(d, m), max(d, m)
    assert lo <= e <= hi


@settings(max_examples=200, deadline=None)
@given(d_st, n_st, alpha_st, st.lists(lam_st, min_size=2, max_size=8))
def test_monotone_in_penalty(d, n, alpha, lams):
    lams = np.sort(lams)
    e = cernn_map(d, n, lams, alpha)
    m = prior_mode(alpha)
    diffs = np.diff(e)
    tol = 1e-12 * max(d, m)
    if d > m:
        assert np.all(diffs <= tol)
    else:
        assert np.all(diffs >= -tol)


@settings(max_examples=200, deadline=None)
@given(st.lists(d_st, min_size=2, max_size=10), n_st, lam_st, alpha_st)
def test_order_preserved_and_condition_contracts(ds, n, lam, alpha):
    d = np.sort(ds)[::-1]
    e = cernn_map(d, n, lam, alpha)
    assert np.all(np.diff(e) <= 0)
    assert e[0] / e[-1] <= (d[0] / d[-1]) * (1 + 1e-12)


@settings(max_examples=300, deadline=None)
@given(d_st, n_st, lam_st, alpha_st)
def test_shrinkage_bound(d, n, lam, alpha):
    e = cernn_eigenvalue(d, CernnParams(n, lam, alpha))
    upper = lam * (1 - alpha) / n
    x = 4 * lam * alpha * d / n + 4 * lam**2 * alpha * (1 - alpha) / n**2
    lower = upper - (n / (2 * lam * alpha)) * x * x / 8
    slack = 1e-10 * max(1.0, abs(d), abs(upper))
    assert lower - slack <= e - d <= upper + slack


def test_large_penalty_limit_matches_expansion():
    d, n, alpha = 3.0, 10.0, 0.5
    m = prior_mode(alpha)
    coef = m * n * d / (2 * (1 - alpha)) - n / (2 * alpha)
    for lam in (1e4, 1e6, 1e8):
        e = cernn_eigenvalue(d, CernnParams(n, lam, alpha))
        assert (e - m) * lam == pytest.approx(coef, rel=1e-2 * max(1.0, 1e6 / lam))


# --- full estimate --------------------------------------------------------------


def test_identity_scale_matrix_is_fixed():
    s = 3.7 * np.eye(4)
    a = alpha_hat(s)
    for lam in (0.1, 10.0, 1e5):
        est = cernn_estimate(s, CernnParams(20, lam, a))
        np.testing.assert_allclose(est.matrix, s, rtol=1e-12)


def test_zero_penalty_returns_input_bit_for_bit():
    s = sample_covariance(np.random.default_rng(1).standard_normal((8, 4)))
    est = cernn_estimate(s, CernnParams(8, 0.0, 0.5))
    assert np.array_equal(est.matrix, s)
    assert np.array_equal(est.matrix, sample_estimate(s).matrix)


def test_estimate_matches_scalar_map():
    rng = np.random.default_rng(2)
    s = _random_spd(rng, 5)
    params = CernnParams(7, 2.5, alpha_hat(s))
    est = cernn_estimate(s, params)
    dec = eig_sym(s)
    expected = dec.reconstruct(cernn_eigenvalue(dec.eigenvalues, params))
    assert np.array_equal(est.matrix, expected)
    assert est.is_spd and est.method == "cernn"
    assert est.params == {"lambda": 2.5, "alpha": params.alpha, "n": 7}


def test_estimate_accepts_decomposition():
    s = _random_spd(np.random.default_rng(3), 4)
    params = CernnParams(5, 1.0, 0.4)
    np.testing.assert_allclose(cernn_estimate(eig_sym(s), params).matrix, cernn_estimate(s, params).matrix)


def test_singular_input_becomes_spd():
    s = sample_covariance(np.random.default_rng(4).standard_normal((3, 6)))
    est = cernn_estimate(s, CernnParams(3, 1.0, alpha_hat(s)))
    assert est.eigenvalues.min() > 0


def test_tied_eigenvalues_are_basis_invariant():
    rng = np.random.default_rng(6)
    q1, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    vals = np.array([5.0, 2.0, 2.0, 0.5])
    s = (q1 * vals) @ q1.T
    # rotate within the tied block
    g = np.eye(4)
    c, sn = np.cos(0.7), np.sin(0.7)
    g[1:3, 1:3] = [[c, -sn], [sn, c]]
    from cernn.spectral import SpectralDecomposition

    params = CernnParams(10, 3.0, 0.3)
    a = cernn_estimate(SpectralDecomposition(vals, q1), params).matrix
    b = cernn_estimate(SpectralDecomposition(vals, q1 @ g), params).matrix
    np.testing.assert_allclose(a, b, atol=1e-8)
    np.testing.assert_allclose(a, cernn_estimate(s, params).matrix, atol=1e-8)


def test_fig2_paths_move_toward_mean():
    s = np.diag(FIG2)
    a = alpha_hat(s)
    prev = FIG2
    for lam in np.geomspace(1e-2, 1e6, 30):
        e = cernn_estimate(s, CernnParams(1, lam, a)).eigenvalues
        assert np.all(np.abs(e - 4.304) <= np.abs(prev - 4.304) + 1e-12)
        prev = e
    np.testing.assert_allclose(prev, 4.304, rtol=1e-3)


def test_rejects_indefinite_input():
    with pytest.raises(InvalidInputError):
        cernn_estimate(np.diag([1.0, -1.0]), CernnParams(1, 1, 0.5))


# --- alpha_hat and lambda_max ------------------------------------------------------


def test_alpha_hat_examples():
    assert alpha_hat(np.eye(3)) == 0.5
    assert alpha_hat(2 * np.eye(4)) == pytest.approx(0.2)
    assert alpha_hat(1e-4 * np.eye(2)) == pytest.approx(1.0)
    assert alpha_hat(1e-4 * np.eye(2)) < 1.0


def test_alpha_hat_needs_positive_trace():
    with pytest.raises(InvalidInputError):
        alpha_hat(np.zeros((2, 2)))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_alpha_hat_contract(p, seed):
    s = _random_spd(np.random.default_rng(seed), p)
    a = alpha_hat(s)
    assert math.sqrt((1 - a) / a) * p == pytest.approx(np.trace(s), rel=1e-10)


def test_lambda_max_examples():
    assert lambda_max_bound([3.0], 10, 0.5, 0.01) == pytest.approx(2000.0)
    assert lambda_max_bound([1.0, 1.0], 10, 0.5) == 0.0
    full = lambda_max_bound(FIG2, 5, 0.3, 0.02)
    assert lambda_max_bound(FIG2, 5, 0.3, 0.01) == pytest.approx(2 * full)


def test_lambda_max_satisfies_its_inequality():
    d, n, alpha, eps = FIG2, 5.0, alpha_hat(np.diag(FIG2)), 1e-2
    lam = lambda_max_bound(d, n, alpha, eps)
    m = prior_mode(alpha)
    dev = np.abs(m * n * d / (2 * (1 - alpha)) - n / (2 * alpha)) / lam
    assert np.max(dev) == pytest.approx(eps * m, rel=1e-12)


def test_lambda_max_validation():
    with pytest.raises(InvalidInputError):
        lambda_max_bound([1.0], 1, 0.5, 0.0)


# --- linear and Ledoit-Wolf -------------------------------------------------------


def test_linear_examples():
    s = np.diag([4.0, 2.0])
    np.testing.assert_allclose(linear_shrinkage(s, 0.0).matrix, s)
    np.testing.assert_allclose(linear_shrinkage(s, 1.0).matrix, 3.0 * np.eye(2))
    # sigma_hat = 3: 0.5 * (4, 2) + 0.5 * 3
    np.testing.assert_allclose(linear_shrinkage(s, 0.5).eigenvalues, [3.5, 2.5])
    np.testing.assert_allclose(linear_shrinkage(s, 1.0, rho=7.0).matrix, 7.0 * np.eye(2))
    with pytest.raises(InvalidInputError):
        linear_shrinkage(s, 1.5)


def test_lw_matches_reference_implementation():
    from sklearn.covariance import ledoit_wolf

    rng = np.random.default_rng(7)
    for n, p in [(10, 5), (20, 40), (200, 3)]:
        x = rng.standard_normal((n, p)) @ np.diag(rng.uniform(0.5, 3, p))
        est = lw_estimate(x)
        ref, shrink = ledoit_wolf(x)
        np.testing.assert_allclose(est.matrix, ref, rtol=1e-10, atol=1e-12)
        assert est.params["gamma"] == pytest.approx(shrink, rel=1e-10)


def test_lw_degenerate_branch_returns_sample():
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    s = sample_covariance(x)
    est = lw_estimate(x)
    np.testing.assert_allclose(est.matrix, s)
    assert est.params["gamma"] == 0.0


def test_lw_weight_vanishes_with_large_n():
    p = 4
    x = np.random.default_rng(8).standard_normal((200 * p, p)) @ np.diag([1.0, 2.0, 3.0, 4.0])
    assert lw_estimate(x).params["gamma"] < 0.05


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_lw_weight_in_unit_interval_and_spread_contracts(n, p, seed):
    x = np.random.default_rng(seed).standard_normal((n, p))
    est = lw_estimate(x)
    assert 0.0 <= est.params["gamma"] <= 1.0
    d = eig_sym(sample_covariance(x)).eigenvalues
    assert np.ptp(est.eigenvalues) <= np.ptp(d) + 1e-12


# --- condition-number regularization -------------------------------------------------


def test_cnr_slack_constraint_returns_d():
    e, tau = cnr_eigenvalues(FIG2, 100.0)
    np.testing.assert_array_equal(e, FIG2)
    assert tau == FIG2[-1]


def test_cnr_kappa_one_gives_mean():
    e, tau = cnr_eigenvalues(FIG2, 1.0)
    np.testing.assert_allclose(e, np.mean(FIG2), rtol=1e-12)


def test_cnr_matches_grid_search_oracle():
    e, tau = cnr_eigenvalues(FIG2, 10.0)
    g_tau, g_h = cnr_grid_search(FIG2, 10.0)
    assert cnr_objective(FIG2, tau, 10.0) <= g_h + 1e-12
    assert tau == pytest.approx(g_tau, rel=1e-3)
    assert e.max() / e.min() <= 10.0 + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=8), st.floats(1.0, 50.0))
def test_cnr_properties(ds, kappa):
    d = np.sort(ds)[::-1]
    e, tau = cnr_eigenvalues(d, kappa)
    assert e.max() / e.min() <= kappa + 1e-9
    assert np.all(np.diff(e) <= 0)
    g_tau, g_h = cnr_grid_search(d, kappa, points=20_000)
    assert cnr_objective(d, tau, kappa) <= g_h + 1e-9 * abs(g_h)


def test_cnr_rejects_singular_by_default():
    with pytest.raises(InvalidInputError):
        cnr_eigenvalues([2.0, 0.0], 5.0)
    e, tau = cnr_eigenvalues([2.0, 0.0], 5.0, allow_singular=True)
    assert e.min() > 0 and e.max() / e.min() <= 5.0 + 1e-9


def test_cnr_validation():
    with pytest.raises(InvalidInputError):
        cnr_eigenvalues(FIG2, 0.5)


def test_cnr_estimate_records_parameters():
    s = _random_spd(np.random.default_rng(9), 5)
    est = cnr_estimate(s, 3.0)
    assert est.method == "cnr"
    assert est.params["kappa_max"] == 3.0
    assert condition_number(est.spectrum) <= 3.0 + 1e-9
