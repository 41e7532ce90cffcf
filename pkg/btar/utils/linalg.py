from __future__ import annotations

import numpy as np
from scipy import linalg

from btar.utils.errors import NotPositiveDefiniteError


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def cholesky(m: np.ndarray, *, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor, raising ``NotPositiveDefiniteError`` on failure."""
    try:
        return linalg.cholesky(symmetrize(np.atleast_2d(m)), lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{what} is not positive definite") from exc


def inverse_cholesky(m: np.ndarray, *, what: str = "matrix") -> np.ndarray:
    """``L^{-1}`` for ``m = L L'``."""
    low = cholesky(m, what=what)
    return linalg.solve_triangular(low, np.eye(low.shape[0]), lower=True)


def spd_inverse(m: np.ndarray, *, what: str = "matrix") -> np.ndarray:
    low = cholesky(m, what=what)
    return linalg.cho_solve((low, True), np.eye(low.shape[0]))


def logdet_spd(m: np.ndarray, *, what: str = "matrix") -> float:
    low = cholesky(m, what=what)
    return 2.0 * float(np.sum(np.log(np.diag(low))))
