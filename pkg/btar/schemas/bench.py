from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from btar import constants

DgpKind = Literal["lowrank", "lowrank_sparse", "dense_var"]
Estimator = Literal["bvar-minn", "btar-cp", "btar-tk", "btar-tk-msb"]


class DgpSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: DgpKind
    dims: tuple[int, int, int]
    ranks: tuple[int, int, int, int, int, int] | None = None
    T: int = 200
    seed: int = 0
    target_norm: float = constants.DGP_TARGET_NORM
    intercept: float = constants.DGP_INTERCEPT
    noise_scale: float = 1.0
    max_radius: float = constants.DGP_MAX_RADIUS

    @field_validator("dims")
    @classmethod
    def validate_dims(cls, value: tuple[int, int, int]) -> tuple[int, int, int]:
        if any(d < 1 for d in value):
            raise ValueError("dims must be positive")
        return value

    @field_validator("T")
    @classmethod
    def validate_length(cls, value: int) -> int:
        if value < 2:
            raise ValueError("T must be at least 2")
        return value

    @field_validator("target_norm", "noise_scale", "max_radius")
    @classmethod
    def validate_positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("target_norm, noise_scale and max_radius must be positive")
        return value

    @model_validator(mode="after")
    def validate_kind(self) -> "DgpSpec":
        if self.kind != "dense_var":
            if self.ranks is None:
                raise ValueError(f"{self.kind} DGP needs ranks")
            if any(r < 1 or r > d for r, d in zip(self.ranks, self.dims + self.dims)):
                raise ValueError("ranks must satisfy 1 <= R_i <= I_i")
        if self.kind == "lowrank_sparse" and (self.ranks[1] < 2 or self.ranks[4] < 2):
            raise ValueError("lowrank_sparse zeroes the second column of B2 and B5, so R2 and R5 must be >= 2")
        return self


class SuiteSpec(BaseModel):
    """Grid of DGPs, sample sizes, estimators and seeds for a benchmark run."""

    model_config = ConfigDict(extra="forbid")

    dgps: list[DgpSpec]
    T_values: list[int]
    estimators: list[Estimator] = ["bvar-minn", "btar-cp", "btar-tk", "btar-tk-msb"]
    seeds: list[int] = list(range(10))
    fit_ranks: tuple[int, int, int, int, int, int] | None = None
    rank_sweep: list[int] = []
    cp_rank: int | None = None
    n_iter: int = 4000
    n_burn: int = 2000
    thin: int = 2
    kappa1: float = constants.MINNESOTA_KAPPA1
    kappa2: float = constants.MINNESOTA_KAPPA2

    @field_validator("T_values", "seeds")
    @classmethod
    def validate_non_empty(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError("must list at least one value")
        return value

    @model_validator(mode="after")
    def validate_ranks(self) -> "SuiteSpec":
        needs_ranks = any(e != "bvar-minn" for e in self.estimators)
        for dgp in self.dgps:
            if needs_ranks and dgp.ranks is None and self.fit_ranks is None:
                raise ValueError(f"{dgp.kind} DGP has no ranks; set fit_ranks for the TAR estimators")
        if not 0 <= self.n_burn < self.n_iter:
            raise ValueError("n_burn must satisfy 0 <= n_burn < n_iter")
        return self
