"""Raw posterior-draw dump.

Layout: the magic line, then ``n_draws`` and ``n_params`` as little-endian
int64, then ``n_draws * n_params`` little-endian float64 values, one draw
per row.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from btar import constants
from btar.services.series_io import atomic_write_bytes
from btar.services.tensor_ops import vec
from btar.utils.errors import DataFormatError

logger = logging.getLogger(__name__)

_COUNTS = np.dtype("<i8")
_VALUES = np.dtype("<f8")


def write_draws(path: str | Path, matrix: np.ndarray) -> Path:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    n_draws, n_params = matrix.shape
    payload = b"".join([
        constants.DRAWS_MAGIC,
        np.array([n_draws, n_params], dtype=_COUNTS).tobytes(),
        np.ascontiguousarray(matrix, dtype=_VALUES).tobytes(),
    ])
    path = atomic_write_bytes(path, payload)
    logger.info("Wrote %s draws x %s parameters to %s", n_draws, n_params, path)
    return path


def read_draws(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic = constants.DRAWS_MAGIC
    if not data.startswith(magic):
        raise DataFormatError(f"{path} is not a draw dump (bad magic line)")
    offset = len(magic)
    if len(data) < offset + 2 * _COUNTS.itemsize:
        raise DataFormatError(f"{path} is truncated")
    n_draws, n_params = (int(v) for v in np.frombuffer(data, dtype=_COUNTS, count=2, offset=offset))
    offset += 2 * _COUNTS.itemsize
    expected = n_draws * n_params * _VALUES.itemsize
    if len(data) - offset != expected:
        raise DataFormatError(f"{path}: payload has {len(data) - offset} bytes, expected {expected}")
    values = np.frombuffer(data, dtype=_VALUES, count=n_draws * n_params, offset=offset)
    return values.reshape(n_draws, n_params).astype(float)


def flatten_draws(draws) -> tuple[np.ndarray, list[str]]:
    """One row per draw: core, B1..B6, Sigma_1..3, intercept, trend, volatility, log-likelihood."""
    rows = []
    names: list[str] = []
    for k in range(draws.n_draws):
        f = draws.factors[k]
        parts = [("core", vec(f.core))]
        parts += [(f"B{m}", vec(b)) for m, b in enumerate(f.factors, start=1)]
        parts += [(f"Sigma{m}", vec(s)) for m, s in enumerate(draws.sigma[k], start=1)]
        parts.append(("a0", vec(draws.intercept[k])))
        if draws.trend:
            parts.append(("a1", vec(draws.trend[k])))
        if draws.h:
            parts.append(("h", np.asarray(draws.h[k], dtype=float)))
        elif draws.outliers:
            parts.append(("outlier", np.asarray(draws.outliers[k], dtype=float)))
        parts.append(("log_lik", np.array([draws.log_lik[k]])))
        if k == 0:
            names = [f"{name}[{j}]" if values.size > 1 else name
                     for name, values in parts for j in range(1, values.size + 1)]
        rows.append(np.concatenate([values for _, values in parts]))
    if not rows:
        return np.empty((0, 0)), names
    return np.vstack(rows), names
