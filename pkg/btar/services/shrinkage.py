"""Conditional updates of the multiway stick-breaking shrinkage prior."""
from __future__ import annotations

import logging
from typing import Callable

import numpy as np
from scipy import stats

from btar.schemas.config import PriorConfig
from btar.services.tar_model import ModelState, ShrinkageState, alpha_grid, stick_breaking
from btar.utils.errors import SupportError

logger = logging.getLogger(__name__)

# Keeps the GIG scale finite when every margin of a mode is exactly zero.
CHI_FLOOR = 1e-12


def gig_rvs(lam: float, chi: float, psi: float, rng: np.random.Generator, size=None):
    """Draw from GIG with density proportional to ``x^(lam-1) exp(-(chi/x + psi x)/2)``.

    Uses scipy's ``geninvgauss`` (ratio-of-uniforms) on the standardized
    variable ``x / sqrt(chi/psi)``.
    """
    if chi <= 0 or psi <= 0:
        raise SupportError(f"GIG needs chi > 0 and psi > 0, got chi={chi}, psi={psi}")
    scale = np.sqrt(chi / psi)
    return stats.geninvgauss.rvs(lam, np.sqrt(chi * psi), scale=scale, size=size, random_state=rng)


def tau_posterior(b: np.ndarray, phi: np.ndarray, prior: PriorConfig) -> tuple[float, float, float]:
    """``(lambda, chi, psi)`` of the GIG conditional of one mode's global scale."""
    dim, rank = b.shape
    chi = float(np.sum(np.sum(b * b, axis=0) / phi))
    return prior.tau_shape - rank * dim / 2.0, max(chi, CHI_FLOOR), 2.0 * prior.tau_rate


def sample_tau(b: np.ndarray, phi: np.ndarray, prior: PriorConfig, rng: np.random.Generator) -> float:
    lam, chi, psi = tau_posterior(b, phi, prior)
    return float(gig_rvs(lam, chi, psi, rng))


def log_eta_target(eta: np.ndarray, b: np.ndarray, tau: float, alpha: float) -> float:
    """Log conditional density of the stick proportions of one mode, up to a constant."""
    dim, rank = b.shape
    var = tau * stick_breaking(eta, rank)
    margins = -0.5 * dim * np.sum(np.log(var)) - 0.5 * np.sum(np.sum(b * b, axis=0) / var)
    return float((alpha - 1.0) * np.sum(np.log1p(-eta)) + margins)


def eta_mh_step(value: float, log_target: Callable[[float], float], step: float,
                rng: np.random.Generator) -> tuple[float, bool]:
    """One random-walk Metropolis step on ``(0, 1)``; proposals outside are rejected."""
    proposal = value + step * rng.standard_normal()
    if not 0.0 < proposal < 1.0:
        return value, False
    if np.log(rng.random()) < log_target(proposal) - log_target(value):
        return proposal, True
    return value, False


def sample_eta(eta: np.ndarray, b: np.ndarray, tau: float, alpha: float, step: float,
               rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Single-site updates of every stick proportion; returns the new vector and accepts."""
    eta = eta.copy()
    accepted = 0
    for r in range(eta.size):
        def target(value: float, r=r) -> float:
            trial = eta.copy()
            trial[r] = value
            return log_eta_target(trial, b, tau, alpha)

        eta[r], ok = eta_mh_step(eta[r], target, step, rng)
        accepted += int(ok)
    return eta, accepted


def alpha_weights(eta: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Normalized griddy-Gibbs weights ``alpha^(R-1) prod(1 - eta)^(alpha - 1)``."""
    # One Beta(1, alpha) factor per stick: R - 1 sticks give alpha^(R-1). Uniform when R == 1.
    log_w = eta.size * np.log(grid) + (grid - 1.0) * float(np.sum(np.log1p(-eta)))
    log_w -= np.max(log_w)
    w = np.exp(log_w)
    return w / np.sum(w)


def sample_alpha(eta: np.ndarray, grid: np.ndarray, rng: np.random.Generator) -> float:
    return float(rng.choice(grid, p=alpha_weights(eta, grid)))


def sample_shrinkage(state: ModelState, rng: np.random.Generator, *, prior: PriorConfig,
                     eta_step: float, alpha_grid_size: int) -> tuple[ShrinkageState, tuple[int, int]]:
    """Update ``tau``, ``eta``, ``phi`` and ``alpha`` of all six modes.

    Returns the new state and ``(accepted, proposed)`` counts of the eta steps.
    """
    sh = state.shrink
    grid = alpha_grid(alpha_grid_size)
    tau = sh.tau.copy()
    alpha = sh.alpha.copy()
    etas = []
    accepted = proposed = 0
    for mode, b in enumerate(state.factors.factors, start=1):
        k = mode - 1
        tau[k] = sample_tau(b, sh.phi(mode), prior, rng)
        eta, acc = sample_eta(sh.eta[k], b, tau[k], alpha[k], eta_step, rng)
        accepted += acc
        proposed += eta.size
        alpha[k] = sample_alpha(eta, grid, rng)
        etas.append(eta)
        logger.debug("Shrinkage mode %s: tau=%.4g alpha=%.3f", mode, tau[k], alpha[k])
    return ShrinkageState(tau=tau, eta=etas, alpha=alpha), (accepted, proposed)
