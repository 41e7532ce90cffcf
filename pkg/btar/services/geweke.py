"""Joint-distribution checks of the sampler (marginal vs successive conditional)."""
from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

from btar.schemas.config import PriorConfig, SamplerConfig
from btar.services.gibbs import AcceptanceCounter, gibbs_sweep
from btar.services.tar_model import ModelState, sample_prior, simulate

logger = logging.getLogger(__name__)

Statistic = Callable[[ModelState], Sequence[float]]


def default_statistics(state: ModelState) -> list[float]:
    """``tau_1``, the first core entry, ``Sigma_1[0, 0]``, and ``phi`` and ``sigma2`` under CSV."""
    stats_ = [float(state.shrink.tau[0]), float(state.factors.core.flat[0]), float(state.cov.s1[0, 0])]
    if state.vol.regime == "csv":
        stats_.extend((float(state.vol.phi), float(state.vol.sigma2)))
    return stats_


def geweke_simulators(dims: Sequence[int], config: SamplerConfig, prior: PriorConfig, n_obs: int,
                      n_samples: int, rng: np.random.Generator, *, y0: np.ndarray | None = None,
                      statistic: Statistic = default_statistics) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(marginal, successive)`` statistic arrays of shape ``(n_samples, k)``.

    The marginal-conditional simulator draws parameters from the prior and data
    given them. The successive-conditional simulator alternates one Gibbs sweep
    with a fresh data draw. Both target the same joint distribution.
    """
    dims = tuple(dims)
    y0 = np.zeros(dims) if y0 is None else y0
    core_fixed = config.decomposition == "cp"

    def prior_draw() -> ModelState:
        return sample_prior(dims, config.ranks, prior, config.regime, n_obs, rng,
                            shrinkage=config.shrinkage, trend=config.trend, core_fixed=core_fixed,
                            alpha_grid_size=config.alpha_grid_size)

    marginal = np.array([statistic(prior_draw()) for _ in range(n_samples)])

    state = prior_draw()
    series = simulate(state, n_obs, y0, rng)
    counter = AcceptanceCounter()
    successive = []
    for it in range(n_samples):
        state = gibbs_sweep(state, series, rng, config=config, prior=prior, sweep=it, counter=counter)
        series = simulate(state, n_obs, y0, rng)
        successive.append(statistic(state))
    logger.info("Geweke run finished: acceptance %s", counter.rates())
    return marginal, np.array(successive)


def batch_means_se(x: np.ndarray, n_batches: int = 50) -> np.ndarray:
    """Standard error of the mean of each column from non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    size = x.shape[0] // n_batches
    if size < 1:
        raise ValueError("fewer samples than batches")
    means = x[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def geweke_z(marginal: np.ndarray, successive: np.ndarray, n_batches: int = 50) -> np.ndarray:
    """Difference of means in joint standard errors, one value per statistic."""
    se_m = np.std(marginal, axis=0, ddof=1) / np.sqrt(marginal.shape[0])
    se_s = batch_means_se(successive, n_batches)
    return (marginal.mean(axis=0) - successive.mean(axis=0)) / np.sqrt(se_m ** 2 + se_s ** 2)
