from __future__ import annotations

from pydantic import BaseModel, Field, field_validator

from btar import constants
from btar.schemas.config import Decomposition, Regime, _check_ranks


class FitRequest(BaseModel):
    """Series values are time-major nested lists ``[T+1][I1][I2][I3]``, presample first."""

    series: list[list[list[list[float]]]]
    ranks: tuple[int, int, int, int, int, int]
    regime: Regime = "homoskedastic"
    trend: bool = False
    shrinkage: bool = True
    decomposition: Decomposition = "tucker"
    n_iter: int = Field(default=400, ge=1)
    n_burn: int = Field(default=200, ge=0)
    thin: int = Field(default=1, ge=1)
    seed: int = 0
    eta_step: float = constants.ETA_STEP
    h_step: float = constants.H_STEP

    @field_validator("ranks")
    @classmethod
    def validate_ranks(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        return _check_ranks(value)
