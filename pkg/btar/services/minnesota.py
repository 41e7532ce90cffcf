"""Bayesian VAR(1) baseline on ``vec(Y_t)`` with a Minnesota prior."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from btar import constants
from btar.services.tar_model import split_series
from btar.services.tensor_ops import vec_series

logger = logging.getLogger(__name__)


@dataclass
class MinnesotaFit:
    coefficients: np.ndarray
    intercept: np.ndarray
    sigma2: np.ndarray


def ar1_residual_variances(y: np.ndarray) -> np.ndarray:
    """Residual variance of a univariate AR(1) with intercept for every column of ``y``."""
    n_obs, n_series = y.shape
    if n_obs < 4:
        logger.warning("Only %s observations: Minnesota scales fall back to 1", n_obs)
        return np.ones(n_series)
    out = np.empty(n_series)
    for j in range(n_series):
        design = np.column_stack([np.ones(n_obs - 1), y[:-1, j]])
        coef, *_ = np.linalg.lstsq(design, y[1:, j], rcond=None)
        resid = y[1:, j] - design @ coef
        out[j] = resid @ resid / (n_obs - 3)
    out[~np.isfinite(out) | (out <= 0)] = 1.0
    return out


def minnesota_prior_variances(sigma2: np.ndarray, kappa1: float, kappa2: float) -> np.ndarray:
    """Row ``i`` holds the prior variances of equation ``i``: intercept first, then lags."""
    n = sigma2.size
    lags = kappa1 * kappa2 * sigma2[:, None] / sigma2[None, :]
    lags[np.diag_indices(n)] = kappa1
    intercept = constants.MINNESOTA_INTERCEPT_VARIANCE * sigma2[:, None]
    return np.hstack([intercept, lags])


def bvar_minnesota(series: np.ndarray, kappa1: float = constants.MINNESOTA_KAPPA1,
                   kappa2: float = constants.MINNESOTA_KAPPA2) -> MinnesotaFit:
    """Posterior mean of each equation given its AR(1) residual variance."""
    y, x = split_series(series)
    yv, xv = vec_series(y), vec_series(x)
    n_obs, n = yv.shape
    sigma2 = ar1_residual_variances(np.vstack([xv[:1], yv]))
    design = np.column_stack([np.ones(n_obs), xv])
    gram = design.T @ design
    cross = design.T @ yv
    prior_var = minnesota_prior_variances(sigma2, kappa1, kappa2)
    coef = np.empty((n, n + 1))
    for i in range(n):
        precision = gram / sigma2[i] + np.diag(1.0 / prior_var[i])
        coef[i] = linalg.solve(precision, cross[:, i] / sigma2[i], assume_a="pos")
    logger.debug("Minnesota fit: %s equations, kappa1=%s kappa2=%s", n, kappa1, kappa2)
    return MinnesotaFit(coefficients=coef[:, 1:], intercept=coef[:, 0], sigma2=sigma2)
