import numpy as np
import pytest
from scipy import stats

from btar.services.conditionals import (
    GaussianConditional,
    commutation_matrix,
    core_conditional,
    design_b4,
    design_b5,
    design_b6,
    factor_conditional,
    factor_from_parameter,
    factor_parameter,
    intercept_conditional,
    predictor_design,
    regression_design,
    sigma_posterior,
)
from btar.services.decomposition import CPFactors, cp_reconstruct, superdiagonal
from btar.services.tar_model import (
    InterceptTrend,
    fitted,
    predictor_factors,
    predictor_loadings,
    residuals,
    simulate,
    split_series,
)
from btar.services.tensor_ops import gen_inner, unvec, vec, vec_series
from btar.utils.errors import ShapeMismatchError, SingularPrecisionError
from conftest import random_series, random_state

DIMS = (2, 2, 2)
RANKS = (1, 2, 1, 2, 1, 2)


def _weights(state, n_obs):
    if state.vol.regime == "homoskedastic":
        return np.ones(n_obs)
    return 1.0 / state.vol.omega


def _gls(state, series, fit_of_param, size):
    """Dense GLS: columns of each X_t come from evaluating the (linear) fit at unit vectors."""
    y, x = split_series(series)
    n_obs = y.shape[0]
    cols = np.stack([fit_of_param(np.eye(size)[k], x) for k in range(size)], axis=-1)
    sigma_inv = np.linalg.inv(state.cov.full())
    d = vec_series(y - state.intercept.at(n_obs))
    w = _weights(state, n_obs)
    precision = np.zeros((size, size))
    linear = np.zeros(size)
    for t in range(n_obs):
        precision += w[t] * cols[t].T @ sigma_inv @ cols[t]
        linear += w[t] * cols[t].T @ sigma_inv @ d[t]
    return np.linalg.solve(precision, linear), precision


def _factor_fit(state, mode):
    f = state.factors
    shape = f.factors[mode - 1].shape

    def fit(theta, x):
        return vec_series(fitted(f.replace(mode=mode, factor=factor_from_parameter(mode, theta, shape)), x))
    return fit, shape[0] * shape[1]


@pytest.mark.parametrize("regime", ["homoskedastic", "csv"])
@pytest.mark.parametrize("mode", [1, 2, 3, 4, 5, 6])
def test_factor_conditional_matches_flat_prior_gls(rng, mode, regime):
    state = random_state(rng, DIMS, RANKS, regime=regime, n_obs=12, trend=True)
    series = random_series(rng, DIMS, 12)
    cond = factor_conditional(mode, state, series, np.full(state.factors.ranks[mode - 1], np.inf))
    fit, size = _factor_fit(state, mode)
    mean, precision = _gls(state, series, fit, size)
    np.testing.assert_allclose(cond.mean(), mean, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(cond.covariance(), np.linalg.inv(precision), rtol=1e-6, atol=1e-10)


def test_factor_conditional_prior_precision_layout(rng):
    state = random_state(rng, DIMS, RANKS, n_obs=8)
    series = random_series(rng, DIMS, 8)
    variances = np.array([0.5, 2.0])
    for mode in (2, 4, 5):
        rank = state.factors.ranks[mode - 1]
        cond = factor_conditional(mode, state, series, variances[:rank])
        flat = factor_conditional(mode, state, series, np.full(rank, np.inf))
        dim = state.factors.factors[mode - 1].shape[0]
        b = np.zeros((dim, rank))
        b[:] = 1.0 / variances[:rank]
        np.testing.assert_allclose(np.diag(cond.precision - flat.precision), factor_parameter(mode, b))


@pytest.mark.parametrize("mode", [1, 4, 6])
def test_factor_conditional_zero_data_returns_prior_mean(rng, mode):
    state = random_state(rng, DIMS, RANKS, n_obs=5)
    state.intercept = InterceptTrend.zeros(DIMS)
    cond = factor_conditional(mode, state, np.zeros((6,) + DIMS), np.ones(state.factors.ranks[mode - 1]))
    np.testing.assert_allclose(cond.mean(), 0.0, atol=1e-14)


def test_factor_conditional_draw_moments(rng):
    state = random_state(rng, (2, 1, 1), (1,) * 6, n_obs=10)
    series = random_series(rng, (2, 1, 1), 10)
    cond = factor_conditional(1, state, series, np.ones(1))
    draws = np.array([cond.draw(rng) for _ in range(20000)])
    cov = cond.covariance()
    se = np.sqrt(np.diag(cov) / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - cond.mean()) < 4 * se)
    np.testing.assert_allclose(np.cov(draws, rowvar=False), cov, rtol=0.05, atol=0.05 * np.max(np.abs(cov)))


def test_core_conditional_matches_flat_prior_gls(rng):
    state = random_state(rng, DIMS, RANKS, regime="outlier", n_obs=15)
    series = random_series(rng, DIMS, 15)
    ranks = state.factors.ranks
    cond = core_conditional(state, series, np.inf)

    def fit(theta, x):
        return vec_series(fitted(state.factors.replace(core=unvec(theta, ranks)), x))

    mean, _ = _gls(state, series, fit, int(np.prod(ranks)))
    np.testing.assert_allclose(cond.mean(), mean, rtol=1e-8, atol=1e-10)


def test_core_conditional_scalar_core(rng):
    state = random_state(rng, DIMS, (1,) * 6, n_obs=10)
    series = random_series(rng, DIMS, 10)
    cond = core_conditional(state, series, np.inf)

    def fit(theta, x):
        return vec_series(fitted(state.factors.replace(core=theta.reshape((1,) * 6)), x))

    mean, _ = _gls(state, series, fit, 1)
    assert cond.mean()[0] == pytest.approx(mean[0], rel=1e-8)


def test_core_conditional_tight_prior_stays_at_zero(rng):
    state = random_state(rng, DIMS, RANKS, n_obs=5)
    state.intercept = InterceptTrend.zeros(DIMS)
    cond = core_conditional(state, np.zeros((6,) + DIMS), 1e-8)
    draw = cond.draw(rng)
    assert np.max(np.abs(draw)) < 1e-3


@pytest.mark.parametrize("trend", [False, True])
def test_intercept_conditional_matches_dense_gls(rng, trend):
    state = random_state(rng, DIMS, RANKS, regime="csv", n_obs=9, trend=trend)
    series = random_series(rng, DIMS, 9)
    scale = 10.0
    cond = intercept_conditional(state, series, scale)
    y, x = split_series(series)
    n_obs, big_i = y.shape[0], 8
    k = 2 if trend else 1
    sigma_inv = np.linalg.inv(state.cov.full())
    d = vec_series(y - fitted(state.factors, x))
    precision = np.eye(k * big_i) / scale
    linear = np.zeros(k * big_i)
    for t in range(n_obs):
        design = np.hstack([np.eye(big_i), (t + 1) * np.eye(big_i)][:k])
        w = 1.0 / state.vol.omega[t]
        precision += w * design.T @ sigma_inv @ design
        linear += w * design.T @ sigma_inv @ d[t]
    expected = np.linalg.solve(precision, linear)
    got = np.concatenate([vec(m) for m in cond.mean()])
    np.testing.assert_allclose(got, expected, rtol=1e-8, atol=1e-10)
    assert cond.draw(rng).shape == (k,) + DIMS


def test_sigma_posterior_scalar_case_is_inverse_gamma(rng):
    state = random_state(rng, (1, 1, 1), (1,) * 6, n_obs=7)
    state.cov.s1 = np.array([[1.0]])
    state.cov.s2 = np.array([[1.0]])
    state.cov.s3 = np.array([[1.0]])
    series = random_series(rng, (1, 1, 1), 7)
    df, scale = sigma_posterior(1, state, series, prior_dof=3.0)
    e = residuals(series, state).ravel()
    assert df == 3.0 + 7
    assert scale[0, 0] == pytest.approx(1.0 + np.sum(e ** 2))
    for value in (0.3, 1.0, 2.5):
        assert stats.invwishart.logpdf(value, df=df, scale=scale) == pytest.approx(
            stats.invgamma.logpdf(value, df / 2.0, scale=scale[0, 0] / 2.0)
        )


def test_sigma_posterior_uses_other_mode_inverses(rng):
    state = random_state(rng, (2, 3, 2), (1, 1, 1, 1, 1, 1), regime="outlier", n_obs=6)
    series = random_series(rng, (2, 3, 2), 6)
    df, scale = sigma_posterior(2, state, series, prior_dof=5.0)
    resid = residuals(series, state)
    s1i, s3i = np.linalg.inv(state.cov.s1), np.linalg.inv(state.cov.s3)
    expected = np.eye(3)
    for t in range(6):
        e2 = np.moveaxis(resid[t], 1, 0).reshape(3, -1, order="F")
        expected += e2 @ np.kron(s3i, s1i) @ e2.T / state.vol.omega[t]
    assert df == 5.0 + 6 * 4
    np.testing.assert_allclose(scale, expected, atol=1e-10)
    with pytest.raises(ShapeMismatchError):
        sigma_posterior(4, state, series, prior_dof=5.0)


def test_predictor_designs_reproduce_predictor_factors(rng):
    state = random_state(rng, (3, 2, 2), (2, 1, 2, 2, 2, 2))
    f = state.factors
    x_t = rng.standard_normal((3, 2, 2))
    direct = vec(predictor_factors(f, x_t[None])[0])
    b4, b5, b6 = f.factors[3:]
    assert np.max(np.abs(design_b4(f, x_t) @ vec(b4.T) - direct)) <= 1e-12
    assert np.max(np.abs(design_b5(f, x_t) @ vec(b5) - direct)) <= 1e-12
    assert np.max(np.abs(design_b6(f, x_t) @ vec(b6) - direct)) <= 1e-12
    np.testing.assert_allclose(direct, predictor_loadings(f).T @ vec(x_t), atol=1e-12)
    with pytest.raises(ShapeMismatchError):
        predictor_design(3, f, x_t)


def test_regression_designs_reproduce_fitted_values(rng):
    state = random_state(rng, (2, 3, 2), (2, 2, 1, 2, 2, 2))
    f = state.factors
    x_t = rng.standard_normal((2, 3, 2))
    direct = vec(fitted(f, x_t[None])[0])
    for mode in (4, 5, 6):
        theta = factor_parameter(mode, f.factors[mode - 1])
        assert np.max(np.abs(regression_design(mode, f, x_t) @ theta - direct)) <= 1e-10


def test_commutation_matrix_examples(rng):
    np.testing.assert_array_equal(commutation_matrix(1, 1), [[1.0]])
    expected = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=float)
    np.testing.assert_array_equal(commutation_matrix(2, 2), expected)
    p = commutation_matrix(2, 3)
    np.testing.assert_array_equal(p.T @ p, np.eye(6))
    m = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(p @ vec(m), vec(m.T))


def test_commutation_identity_on_predictor_factors(rng):
    b5, b6 = rng.standard_normal((3, 2)), rng.standard_normal((2, 3))
    y = rng.standard_normal((3, 2))
    p = commutation_matrix(2, 3)
    lhs = p.T @ np.kron(b5.T, b6.T) @ vec(y.T)
    rhs = np.kron(b6.T, b5.T) @ vec(y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_factor_parameter_round_trip(rng):
    b = rng.standard_normal((3, 2))
    for mode in (1, 4, 6):
        np.testing.assert_array_equal(factor_from_parameter(mode, factor_parameter(mode, b), b.shape), b)


def test_singular_precision_raises():
    cond = GaussianConditional(precision=np.zeros((2, 2)), linear=np.zeros(2))
    with pytest.raises(SingularPrecisionError):
        cond.mean()


@pytest.mark.parametrize("mode", [1, 3, 4, 5])
def test_factor_conditional_with_superdiagonal_core_matches_cp_oracle(rng, mode):
    state = random_state(rng, DIMS, (2,) * 6, n_obs=10)
    state.factors = state.factors.replace(core=superdiagonal(2, 6))
    series = random_series(rng, DIMS, 10)
    shape = state.factors.factors[mode - 1].shape

    def fit(theta, x):
        factors = list(state.factors.factors)
        factors[mode - 1] = factor_from_parameter(mode, theta, shape)
        coef = cp_reconstruct(CPFactors(factors=tuple(factors)))
        return np.stack([vec(gen_inner(coef, x_t)) for x_t in x])

    cond = factor_conditional(mode, state, series, np.full(2, np.inf))
    mean, _ = _gls(state, series, fit, shape[0] * shape[1])
    np.testing.assert_allclose(cond.mean(), mean, rtol=1e-8, atol=1e-10)


def test_sigma_posterior_mean_is_consistent(rng):
    state = random_state(rng, DIMS, (1,) * 6, n_obs=2000)
    series = simulate(state, 2000, np.zeros(DIMS), rng)
    df, scale = sigma_posterior(1, state, series, prior_dof=4.0)
    mean = scale / (df - 2 - 1)
    truth = state.cov.s1
    assert np.linalg.norm(mean - truth) / np.linalg.norm(truth) < 0.1
