"""Dense tensor kernels.

Tensors are ``numpy.ndarray`` objects of order 1..6. Every linearization in
the package is column-major (first index fastest), so ``vec(t)`` equals
``vec(unfold(t, 1))`` and the mode-n unfolding places mode-n fibers as
columns with the remaining indices ordered first-fastest. Modes are 1-based.
"""
from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

from btar.utils.errors import ShapeMismatchError

MAX_ORDER = 6


def _check_mode(t: np.ndarray, mode: int) -> int:
    if not 1 <= mode <= t.ndim:
        raise ShapeMismatchError(f"mode {mode} out of range for order-{t.ndim} tensor")
    return mode - 1


def vec(t: np.ndarray) -> np.ndarray:
    return np.asarray(t, dtype=float).ravel(order="F")


def unvec(v: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if v.size != int(np.prod(shape)):
        raise ShapeMismatchError(f"cannot reshape {v.size} entries into {shape}")
    return np.reshape(v, shape, order="F")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization: rows index ``i_mode``, columns the rest."""
    axis = _check_mode(t, mode)
    moved = np.moveaxis(np.asarray(t, dtype=float), axis, 0)
    return np.reshape(moved, (t.shape[axis], -1), order="F")


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if not 1 <= mode <= len(shape):
        raise ShapeMismatchError(f"mode {mode} out of range for shape {shape}")
    axis = mode - 1
    rest = shape[:axis] + shape[axis + 1:]
    expected = (shape[axis], int(np.prod(rest)))
    if m.shape != expected:
        raise ShapeMismatchError(f"matrix of shape {m.shape} cannot fold to {shape} along mode {mode}")
    full = np.reshape(m, (shape[axis],) + rest, order="F")
    return np.moveaxis(full, 0, axis)


def gen_inner(x: np.ndarray, y: np.ndarray) -> np.ndarray | float:
    """Contract ``x`` against ``y`` over the trailing ``y.ndim`` modes of ``x``."""
    if y.ndim > x.ndim or x.shape[x.ndim - y.ndim:] != y.shape:
        raise ShapeMismatchError(
            f"trailing dimensions of {x.shape} do not match {y.shape}"
        )
    lead = x.ndim - y.ndim
    out = np.tensordot(x, y, axes=(list(range(lead, x.ndim)), list(range(y.ndim))))
    if lead == 0:
        return float(out)
    return out


def mode_multiply(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """n-mode product ``t x_mode m``."""
    axis = _check_mode(t, mode)
    if m.ndim != 2 or m.shape[1] != t.shape[axis]:
        raise ShapeMismatchError(
            f"matrix with {m.shape[-1]} columns cannot multiply mode {mode} of size {t.shape[axis]}"
        )
    out = np.tensordot(m, t, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def multi_mode_multiply(t: np.ndarray, mats: Sequence[np.ndarray | None], offset: int = 0) -> np.ndarray:
    """Apply ``mats[k]`` along mode ``offset + k + 1``; ``None`` entries are skipped."""
    out = t
    for k, m in enumerate(mats):
        if m is not None:
            out = mode_multiply(out, m, offset + k + 1)
    return out


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def kron_chain(mats: Sequence[np.ndarray]) -> np.ndarray:
    """``mats[0] ⊗ mats[1] ⊗ ...``."""
    if not mats:
        return np.ones((1, 1))
    return reduce(kron, mats)


def frobenius_norm(t: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(t))))


# Batched kernels over a leading time axis: ``series[t]`` is one tensor.

def unfold_series(series: np.ndarray, mode: int) -> np.ndarray:
    """Stack of mode-``mode`` unfoldings, shape ``(T, I_mode, prod(rest))``."""
    if not 1 <= mode < series.ndim:
        raise ShapeMismatchError(f"mode {mode} out of range for series of shape {series.shape}")
    moved = np.moveaxis(series, mode, 1)
    return np.reshape(moved, (series.shape[0], series.shape[mode], -1), order="F")


def mode_multiply_series(series: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    if not 1 <= mode < series.ndim:
        raise ShapeMismatchError(f"mode {mode} out of range for series of shape {series.shape}")
    if m.ndim != 2 or m.shape[1] != series.shape[mode]:
        raise ShapeMismatchError(
            f"matrix with {m.shape[-1]} columns cannot multiply mode {mode} of size {series.shape[mode]}"
        )
    out = np.tensordot(m, series, axes=([1], [mode]))
    return np.moveaxis(out, 0, mode)


def multi_mode_multiply_series(series: np.ndarray, mats: Sequence[np.ndarray | None]) -> np.ndarray:
    out = series
    for k, m in enumerate(mats, start=1):
        if m is not None:
            out = mode_multiply_series(out, m, k)
    return out


def vec_series(series: np.ndarray) -> np.ndarray:
    """Rows are ``vec(series[t])``."""
    return np.reshape(series, (series.shape[0], -1), order="F")


def unvec_series(rows: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    return np.reshape(rows, (rows.shape[0],) + tuple(int(s) for s in shape), order="F")
