"""Volatility-regime updates: outlier mixture and common stochastic volatility."""
from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np
from scipy import stats

from btar.schemas.config import PriorConfig
from btar.services.tar_model import ModelState, VolatilityState, outlier_grid, quadratic_forms, residuals

logger = logging.getLogger(__name__)


def outlier_probabilities(quad: np.ndarray, big_i: int, p_out: float) -> tuple[np.ndarray, np.ndarray]:
    """Conditional probabilities over ``{1} ∪ grid`` for every t, with the support values."""
    grid = outlier_grid()
    support = np.concatenate(([1.0], grid))
    log_prior = np.concatenate(([np.log1p(-p_out)], np.full(grid.size, np.log(p_out / grid.size))))
    log_w = log_prior[None, :] - big_i * np.log(support)[None, :] - quad[:, None] / (2.0 * support[None, :] ** 2)
    log_w -= np.max(log_w, axis=1, keepdims=True)
    w = np.exp(log_w)
    return w / np.sum(w, axis=1, keepdims=True), support


def sample_outliers(vol: VolatilityState, quad: np.ndarray, big_i: int, prior: PriorConfig,
                    rng: np.random.Generator) -> VolatilityState:
    probs, support = outlier_probabilities(quad, big_i, vol.p_out)
    u = rng.random(quad.size)[:, None]
    pick = np.minimum(np.sum(np.cumsum(probs, axis=1) < u, axis=1), support.size - 1)
    o = support[pick]
    n_out = int(np.sum(o > 1.0))
    p_out = float(rng.beta(prior.outlier_a + n_out, prior.outlier_b + o.size - n_out))
    out = replace(vol, o=o, p_out=p_out)
    out.sync_omega()
    return out


def _log_h_target(value: float, t: int, h: np.ndarray, quad_t: float, big_i: int,
                  phi: float, sigma2: float) -> float:
    lp = -0.5 * big_i * value - 0.5 * quad_t * np.exp(-value)
    if t == 0:
        lp -= 0.5 * value * value * (1.0 - phi * phi) / sigma2
    else:
        lp -= 0.5 * (value - phi * h[t - 1]) ** 2 / sigma2
    if t + 1 < h.size:
        lp -= 0.5 * (h[t + 1] - phi * value) ** 2 / sigma2
    return lp


def sample_log_volatility(vol: VolatilityState, quad: np.ndarray, big_i: int, step: float,
                          rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Single-site random-walk Metropolis sweep over ``h_1..h_T``."""
    h = vol.h.copy()
    accepted = 0
    for t in range(h.size):
        proposal = h[t] + step * rng.standard_normal()
        log_ratio = (
            _log_h_target(proposal, t, h, quad[t], big_i, vol.phi, vol.sigma2)
            - _log_h_target(h[t], t, h, quad[t], big_i, vol.phi, vol.sigma2)
        )
        if np.log(rng.random()) < log_ratio:
            h[t] = proposal
            accepted += 1
    return h, accepted


def sample_persistence(h: np.ndarray, phi: float, sigma2: float, prior: PriorConfig,
                       rng: np.random.Generator) -> tuple[float, bool]:
    """Independence Metropolis step for ``phi``.

    The proposal is the truncated-normal conditional ignoring the initial
    condition, so the acceptance ratio involves only the density of ``h_1``.
    """
    lagged = h[:-1]
    precision = 1.0 / prior.phi_sd ** 2 + float(np.sum(lagged * lagged)) / sigma2
    mean = (prior.phi_mean / prior.phi_sd ** 2 + float(np.sum(h[1:] * lagged)) / sigma2) / precision
    sd = 1.0 / np.sqrt(precision)
    proposal = float(stats.truncnorm.rvs((-1.0 - mean) / sd, (1.0 - mean) / sd, loc=mean, scale=sd,
                                         random_state=rng))

    def log_initial(p: float) -> float:
        return float(stats.norm.logpdf(h[0], scale=np.sqrt(sigma2 / (1.0 - p * p))))

    if np.log(rng.random()) < log_initial(proposal) - log_initial(phi):
        return proposal, True
    return phi, False


def sample_innovation_variance(h: np.ndarray, phi: float, prior: PriorConfig,
                               rng: np.random.Generator) -> float:
    ssr = h[0] ** 2 * (1.0 - phi * phi) + float(np.sum((h[1:] - phi * h[:-1]) ** 2))
    shape = prior.sigma2_shape + h.size / 2.0
    scale = prior.sigma2_scale + ssr / 2.0
    return float(stats.invgamma.rvs(shape, scale=scale, random_state=rng))


def sample_volatility(state: ModelState, series: np.ndarray, rng: np.random.Generator, *,
                      prior: PriorConfig, h_step: float) -> tuple[VolatilityState, dict[str, tuple[int, int]]]:
    """Update the volatility block; returns the new state and MH ``(accepted, proposed)`` counts."""
    vol = state.vol
    if vol.regime == "homoskedastic":
        return vol, {}
    quad = quadratic_forms(residuals(series, state), state.cov)
    big_i = int(np.prod(state.dims))
    if vol.regime == "outlier":
        return sample_outliers(vol, quad, big_i, prior, rng), {}

    h, h_acc = sample_log_volatility(vol, quad, big_i, h_step, rng)
    phi, phi_ok = sample_persistence(h, vol.phi, vol.sigma2, prior, rng)
    sigma2 = sample_innovation_variance(h, phi, prior, rng)
    out = replace(vol, h=h, phi=phi, sigma2=sigma2)
    out.sync_omega()
    logger.debug("CSV update: phi=%.3f sigma2=%.4g", phi, sigma2)
    return out, {"h": (h_acc, h.size), "phi": (int(phi_ok), 1)}
