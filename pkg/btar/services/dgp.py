"""Simulation designs for the coefficient-recovery experiments."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from btar import constants
from btar.schemas.bench import DgpSpec
from btar.services.decomposition import TuckerFactors, tucker_reconstruct
from btar.services.tar_model import (
    ErrorCov,
    InterceptTrend,
    ModelState,
    VolatilityState,
    simulate,
    spectral_radius,
    var_form,
    var_form_to_tensor,
)
from btar.services.tensor_ops import frobenius_norm

logger = logging.getLogger(__name__)


@dataclass
class DgpDraw:
    spec: DgpSpec
    b_hat: np.ndarray
    series: np.ndarray
    factors: TuckerFactors | None
    scale: float
    guard: float
    radius: float


def stability_scale(b_hat: np.ndarray, max_radius: float) -> float:
    """Largest factor in ``(0, 1]`` that brings the spectral radius to ``max_radius``."""
    radius = spectral_radius(b_hat)
    if radius >= max_radius:
        return max_radius / radius
    return 1.0


def _simulate_from(factors: TuckerFactors, spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    dims = tuple(spec.dims)
    state = ModelState(
        factors=factors,
        intercept=InterceptTrend(a0=np.full(dims, spec.intercept)),
        cov=ErrorCov(*(spec.noise_scale * np.eye(d) for d in dims)),
        vol=VolatilityState.initial("homoskedastic", spec.T + constants.DGP_BURN_IN),
    )
    y0 = np.full(dims, spec.intercept)
    full = simulate(state, spec.T + constants.DGP_BURN_IN, y0, rng)
    return full[constants.DGP_BURN_IN:]


def dgp_lowrank(spec: DgpSpec, rng: np.random.Generator) -> DgpDraw:
    dims = tuple(spec.dims)
    ranks = tuple(spec.ranks)
    core = rng.uniform(0.0, 1.0, size=ranks)
    factors = [
        rng.normal(constants.MARGIN_MEAN, constants.MARGIN_SD, size=(i, r))
        for i, r in zip(dims + dims, ranks)
    ]
    if spec.kind == "lowrank_sparse":
        factors[1][:, 1] = 0.0
        factors[4][:, 1] = 0.0
    f = TuckerFactors(core=core, factors=tuple(factors))
    scale = spec.target_norm / frobenius_norm(tucker_reconstruct(f))
    guard = stability_scale(var_form(f) * scale, spec.max_radius)
    if guard < 1.0:
        logger.info("Shrinking lowrank DGP by %.4f to reach spectral radius %.2f", guard, spec.max_radius)
    scale *= guard
    f = f.replace(core=core * scale)
    b_hat = var_form(f)
    series = _simulate_from(f, spec, rng)
    return DgpDraw(spec=spec, b_hat=b_hat, series=series, factors=f, scale=scale, guard=guard,
                   radius=spectral_radius(b_hat))


def dgp_dense_var(spec: DgpSpec, rng: np.random.Generator) -> DgpDraw:
    dims = tuple(spec.dims)
    big_i = int(np.prod(dims))
    b_hat = rng.normal(0.0, constants.DENSE_OFFDIAG_SD, size=(big_i, big_i))
    np.fill_diagonal(b_hat, rng.uniform(constants.DENSE_DIAG_LOW, constants.DENSE_DIAG_HIGH, size=big_i))
    scale = spec.target_norm / float(np.linalg.norm(b_hat))
    guard = stability_scale(b_hat * scale, spec.max_radius)
    scale *= guard
    b_hat = b_hat * scale
    # full-rank Tucker form with identity factors carries the dense matrix through simulate
    f = TuckerFactors(
        core=var_form_to_tensor(b_hat, dims),
        factors=tuple(np.eye(d) for d in dims + dims),
    )
    series = _simulate_from(f, spec, rng)
    return DgpDraw(spec=spec, b_hat=b_hat, series=series, factors=None, scale=scale, guard=guard,
                   radius=spectral_radius(b_hat))


def generate(spec: DgpSpec, rng: np.random.Generator | None = None) -> DgpDraw:
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    if spec.kind == "dense_var":
        return dgp_dense_var(spec, rng)
    return dgp_lowrank(spec, rng)
