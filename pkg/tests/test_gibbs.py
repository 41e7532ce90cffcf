import numpy as np
import pytest

from btar.schemas.config import PriorConfig, SamplerConfig
from btar.services import gibbs, shrinkage
from btar.services.decomposition import TuckerFactors, hosvd, is_all_orthogonal, tucker_reconstruct
from btar.services.gibbs import (
    AcceptanceCounter,
    PosteriorDraws,
    gibbs_sweep,
    identify,
    initial_state,
    least_squares_var,
    run_chains,
    run_gibbs,
    sample_factor_123,
)
from btar.services.tar_model import (
    ErrorCov,
    InterceptTrend,
    ModelState,
    VolatilityState,
    simulate,
    var_form,
)
from btar.utils.errors import SamplerError, ShapeMismatchError, SingularPrecisionError, SupportError
from conftest import random_series, random_state

RANKS = (1, 2, 1, 2, 1, 1)


def _config(**kwargs) -> SamplerConfig:
    base = dict(n_iter=6, n_burn=2, thin=1, seed=3, ranks=RANKS)
    base.update(kwargs)
    return SamplerConfig(**base)


def test_draw_count_follows_schedule(rng):
    series = random_series(rng, (2, 2, 1), 12)
    assert run_gibbs(series, _config(n_iter=3, n_burn=2)).n_draws == 1
    draws = run_gibbs(series, _config(n_iter=7, n_burn=2, thin=2))
    assert draws.n_draws == 3 == _config(n_iter=7, n_burn=2, thin=2).n_draws
    assert len(draws.log_lik) == len(draws.sigma) == len(draws.intercept) == 3


def test_same_seed_gives_identical_draws(rng):
    series = random_series(rng, (2, 2, 1), 10)
    config = _config(regime="csv", trend=True)
    a = run_gibbs(series, config)
    b = run_gibbs(series, config)
    np.testing.assert_array_equal(a.coefficient_mean(), b.coefficient_mean())
    np.testing.assert_array_equal(a.stacked("h"), b.stacked("h"))
    assert a.log_lik == b.log_lik
    c = run_gibbs(series, _config(regime="csv", trend=True, seed=4))
    assert not np.array_equal(a.coefficient_mean(), c.coefficient_mean())


@pytest.mark.parametrize("regime", ["homoskedastic", "outlier", "csv"])
def test_records_regime_specific_fields(rng, regime):
    series = random_series(rng, (2, 2, 1), 9)
    draws = run_gibbs(series, _config(regime=regime))
    assert draws.stacked("omega").shape == (4, 9)
    assert bool(draws.h) == (regime == "csv")
    assert bool(draws.outliers) == (regime == "outlier")
    assert np.all(np.isfinite(draws.stacked("log_lik")))
    if regime == "csv":
        assert set(draws.acceptance) >= {"h", "phi", "eta"}


def test_sweep_failure_names_block_and_sweep(rng, monkeypatch):
    series = random_series(rng, (2, 2, 1), 8)

    def broken(*args, **kwargs):
        raise SingularPrecisionError("degenerate core")

    monkeypatch.setattr(gibbs, "sample_core", broken)
    with pytest.raises(SamplerError) as info:
        run_gibbs(series, _config())
    assert info.value.block == "core"
    assert info.value.sweep == 0
    assert "degenerate core" in str(info.value)


def test_invalid_gig_parameters_surface_as_shrinkage_failure(rng, monkeypatch):
    series = random_series(rng, (2, 2, 1), 8)
    monkeypatch.setattr(shrinkage, "tau_posterior", lambda b, phi, prior: (1.0, 0.0, 2.0))
    with pytest.raises(SamplerError) as info:
        run_gibbs(series, _config())
    assert info.value.block == "shrinkage"
    assert isinstance(info.value.__cause__, SupportError)


def test_cp_sweep_keeps_superdiagonal_core(rng):
    series = random_series(rng, (2, 2, 2), 10)
    config = _config(ranks=(2,) * 6, decomposition="cp")
    state = initial_state(series, config, rng)
    out = gibbs_sweep(state, series, rng, config=config, prior=PriorConfig())
    np.testing.assert_array_equal(out.factors.core, state.factors.core)
    assert out.factors.core[1, 1, 1, 1, 1, 1] == 1.0
    assert out.factors.core[0, 1, 0, 0, 0, 0] == 0.0


def test_sweep_does_not_mutate_input_state(rng):
    series = random_series(rng, (2, 2, 2), 6)
    state = random_state(rng, (2, 2, 2), (1, 2, 1, 2, 1, 2), regime="outlier", n_obs=6)
    before = var_form(state.factors).copy()
    counter = AcceptanceCounter()
    gibbs_sweep(state, series, rng, config=_config(ranks=(1, 2, 1, 2, 1, 2), regime="outlier"),
                prior=PriorConfig(), counter=counter)
    np.testing.assert_array_equal(var_form(state.factors), before)
    assert set(counter.rates()) == {"eta"}


def test_sample_factor_123_rejects_predictor_modes(rng):
    state = random_state(rng)
    with pytest.raises(ValueError):
        sample_factor_123(4, state, random_series(rng), rng, prior=PriorConfig(), shrinkage=True)


def test_too_short_series_is_rejected(rng):
    with pytest.raises(ShapeMismatchError):
        run_gibbs(random_series(rng, (2, 2, 1), 1), _config())


def test_least_squares_var_recovers_noise_free_system():
    # a rotation keeps the path persistently exciting without noise
    b_hat = np.array([[np.cos(1.0), -np.sin(1.0)], [np.sin(1.0), np.cos(1.0)]])
    series = np.zeros((30, 2, 1, 1))
    series[0, :, 0, 0] = [1.0, -0.5]
    for t in range(29):
        series[t + 1, :, 0, 0] = 0.1 + b_hat @ series[t, :, 0, 0]
    est, intercept = least_squares_var(series)
    np.testing.assert_allclose(est, b_hat, atol=1e-8)
    np.testing.assert_allclose(intercept, 0.1, atol=1e-8)


def test_initial_state_uses_least_squares_when_data_allow(rng):
    series = random_series(rng, (2, 1, 1), 40)
    config = _config(ranks=(2, 1, 1, 2, 1, 1))
    state = initial_state(series, config, rng)
    b_hat, a0 = least_squares_var(series)
    np.testing.assert_allclose(var_form(state.factors), b_hat, atol=1e-10)
    np.testing.assert_allclose(state.intercept.a0.ravel(order="F"), a0)


def test_run_chains_are_ordered_and_thread_independent(rng):
    series = random_series(rng, (2, 2, 1), 8)
    config = _config()
    serial = run_chains(series, config, n_chains=2, threads=1)
    threaded = run_chains(series, config, n_chains=2, threads=2)
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a.coefficient_mean(), b.coefficient_mean())
    assert not np.array_equal(serial[0].coefficient_mean(), serial[1].coefficient_mean())
    merged = PosteriorDraws.concat(serial)
    assert merged.n_draws == 8
    expected = (serial[0].coef_sum + serial[1].coef_sum) / 8
    np.testing.assert_allclose(merged.coefficient_mean(), expected)


def test_identify_returns_orthonormal_sign_normalized_factors(rng):
    series = random_series(rng, (2, 2, 1), 10)
    draws = run_gibbs(series, _config())
    f = identify(draws, RANKS)
    assert f.ranks == RANKS
    for b in f.factors:
        np.testing.assert_allclose(b.T @ b, np.eye(b.shape[1]), atol=1e-10)
        top = np.argmax(np.abs(b), axis=0)
        assert np.all(b[top, np.arange(b.shape[1])] > 0)
    assert is_all_orthogonal(f.core)
    proj = tucker_reconstruct(hosvd(draws.coefficient_tensor_mean(), RANKS))
    np.testing.assert_allclose(tucker_reconstruct(f), proj, atol=1e-10)


@pytest.mark.slow
def test_posterior_mean_recovers_low_rank_coefficients():
    rng = np.random.default_rng(11)
    dims = (2, 2, 1)
    ranks = (1, 1, 1, 1, 1, 1)
    b = [np.array([[0.8], [0.6]]), np.array([[0.6], [-0.8]]), np.ones((1, 1))]
    truth = TuckerFactors(core=np.full(ranks, 0.7), factors=tuple(b + b))
    state = ModelState(
        factors=truth,
        intercept=InterceptTrend.zeros(dims),
        cov=ErrorCov(0.2 * np.eye(2), np.eye(2), np.eye(1)),
        vol=VolatilityState.initial("homoskedastic", 400),
    )
    series = simulate(state, 400, np.zeros(dims), rng)
    draws = run_gibbs(series, SamplerConfig(n_iter=600, n_burn=200, seed=5, ranks=ranks))
    b_hat = var_form(truth)
    err = np.linalg.norm(draws.coefficient_mean() - b_hat) / np.linalg.norm(b_hat)
    assert err < 0.3
