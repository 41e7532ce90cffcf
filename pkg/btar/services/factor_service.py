"""Response/predictor factor series from identified Tucker loadings."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from btar.services.decomposition import TuckerFactors, projection_matrix
from btar.services.tar_model import InterceptTrend, split_series
from btar.services.tensor_ops import multi_mode_multiply_series, vec_series
from btar.utils.errors import ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass
class FactorSeries:
    response: np.ndarray
    predictor: np.ndarray
    response_raw: np.ndarray
    predictor_raw: np.ndarray
    response_labels: list[str]
    predictor_labels: list[str]
    projections: list[np.ndarray]


def rank_labels(ranks) -> list[str]:
    """``"r1_r2_r3"`` labels in column-major order (first index fastest)."""
    grid = itertools.product(*(range(1, r + 1) for r in reversed(tuple(ranks))))
    return ["_".join(str(k) for k in reversed(idx)) for idx in grid]


def _standardize_columns(m: np.ndarray) -> np.ndarray:
    centered = m - m.mean(axis=0)
    sd = centered.std(axis=0, ddof=1) if m.shape[0] > 1 else np.ones(m.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    return centered / sd


def extract_factors(series: np.ndarray, identified: TuckerFactors,
                    intercept: InterceptTrend | np.ndarray | None = None) -> FactorSeries:
    """``B~_m'(y_t - a_t)`` and ``B~' y_{t-1}`` for every t, standardized per column."""
    y, x = split_series(series)
    dims = tuple(y.shape[1:])
    if identified.dims != dims + dims:
        raise ShapeMismatchError(f"identified factors have dims {identified.dims}, data has {dims}")
    if intercept is None:
        a = np.zeros_like(y)
    elif isinstance(intercept, InterceptTrend):
        a = intercept.at(y.shape[0])
    else:
        a = np.broadcast_to(np.asarray(intercept, dtype=float), y.shape)
    b = identified.factors
    response = vec_series(multi_mode_multiply_series(y - a, [m.T for m in b[:3]]))
    predictor = vec_series(multi_mode_multiply_series(x, [m.T for m in b[3:]]))
    ranks = identified.ranks
    logger.info("Extracted %s response and %s predictor factors", response.shape[1], predictor.shape[1])
    return FactorSeries(
        response=_standardize_columns(response),
        predictor=_standardize_columns(predictor),
        response_raw=response,
        predictor_raw=predictor,
        response_labels=rank_labels(ranks[:3]),
        predictor_labels=rank_labels(ranks[3:]),
        projections=[projection_matrix(m) for m in b],
    )


def align_sign(factor: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Return ``factor`` or ``-factor``, whichever is closer to ``reference`` in RMSE."""
    factor = np.asarray(factor, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if factor.shape != reference.shape:
        raise ShapeMismatchError(f"factor shape {factor.shape} differs from reference {reference.shape}")
    plus = float(np.mean((factor - reference) ** 2))
    minus = float(np.mean((factor + reference) ** 2))
    return -factor if minus < plus else factor
