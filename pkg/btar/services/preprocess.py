"""Series transforms applied along the time axis before fitting."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from btar import constants
from btar.services.tensor_ops import unvec_series, vec_series
from btar.utils.errors import ConfigError, ShapeMismatchError

logger = logging.getLogger(__name__)

STEP_NAMES = ("ma", "yoy", "standardize")
DEFAULT_STEPS = f"ma:{constants.MOVING_AVERAGE_WINDOW},yoy:{constants.SEASONAL_LAG},standardize"


@dataclass
class PreprocessResult:
    values: np.ndarray
    # zero-denominator cells of every yoy step, as 1-based (t, i1, i2, i3) in the input series' time index
    flagged: list[tuple[int, int, int, int]] = field(default_factory=list)


def _frame(values: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame(vec_series(np.asarray(values, dtype=float)))


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing ``window``-period mean; the first ``window - 1`` periods are dropped."""
    if window < 1:
        raise ConfigError("moving-average window must be at least 1")
    if values.shape[0] < window:
        raise ShapeMismatchError(f"series of length {values.shape[0]} is shorter than window {window}")
    smoothed = _frame(values).rolling(window).mean().iloc[window - 1:]
    return unvec_series(smoothed.to_numpy(), values.shape[1:])


def yoy_change(values: np.ndarray, lag: int,
               tol: float = constants.ZERO_DENOMINATOR_TOL) -> tuple[np.ndarray, list[tuple[int, int, int, int]]]:
    """``(x_t - x_{t-lag}) / x_{t-lag}``; cells with a zero denominator become 0 and are flagged.

    Flags are 1-based ``(t, i1, i2, i3)`` in the output time index.
    """
    if lag < 1:
        raise ConfigError("seasonal lag must be at least 1")
    if values.shape[0] <= lag:
        raise ShapeMismatchError(f"series of length {values.shape[0]} is too short for lag {lag}")
    base = values[:-lag]
    zero = np.abs(base) <= tol
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(zero, 0.0, (values[lag:] - base) / np.where(zero, 1.0, base))
    flagged = [tuple(int(k) + 1 for k in idx) for idx in np.argwhere(zero)]
    if flagged:
        logger.warning("Year-over-year change: %s zero-denominator cells set to 0", len(flagged))
    return out, flagged


def standardize(values: np.ndarray) -> np.ndarray:
    """Per-series mean 0 and sample standard deviation 1."""
    frame = _frame(values)
    sd = frame.std(ddof=1)
    flat = sd <= 0
    if flat.any():
        logger.warning("Standardization: %s constant series left centered only", int(flat.sum()))
        sd[flat] = 1.0
    out = (frame - frame.mean()) / sd
    return unvec_series(out.to_numpy(), values.shape[1:])


def parse_steps(text: str) -> list[tuple[str, int | None]]:
    """Parse ``"ma:3,yoy:12,standardize"`` into ``[("ma", 3), ("yoy", 12), ("standardize", None)]``."""
    steps = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        name, _, arg = part.partition(":")
        if name not in STEP_NAMES:
            raise ConfigError(f"unknown preprocessing step {name!r}; expected one of {STEP_NAMES}")
        steps.append((name, int(arg) if arg else None))
    return steps


def preprocess(values: np.ndarray, steps: Sequence[tuple[str, int | None]] | str) -> PreprocessResult:
    if isinstance(steps, str):
        steps = parse_steps(steps)
    out = np.asarray(values, dtype=float)
    flagged: set[tuple[int, int, int, int]] = set()
    dropped = 0
    for name, arg in steps:
        before = out.shape[0]
        if name == "ma":
            out = moving_average(out, arg or constants.MOVING_AVERAGE_WINDOW)
        elif name == "yoy":
            lag = arg or constants.SEASONAL_LAG
            out, cells = yoy_change(out, lag)
            flagged |= {(t + lag + dropped, *idx) for t, *idx in cells}
        elif name == "standardize":
            out = standardize(out)
        else:
            raise ConfigError(f"unknown preprocessing step {name!r}")
        dropped += before - out.shape[0]
        logger.debug("Preprocess step %s(%s): length now %s", name, arg, out.shape[0])
    return PreprocessResult(values=out, flagged=sorted(flagged))
