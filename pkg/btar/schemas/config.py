from __future__ import annotations

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from btar import constants

Regime = Literal["homoskedastic", "outlier", "csv"]
Decomposition = Literal["tucker", "cp"]


def _check_ranks(value: tuple[int, ...]) -> tuple[int, ...]:
    if len(value) != 6:
        raise ValueError("ranks must list six values R1..R6")
    if any(r < 1 for r in value):
        raise ValueError("ranks must be positive")
    return value


class PriorConfig(BaseModel):
    """Prior hyperparameters shared by the sampler, ``log_prior`` and ``sample_prior``."""

    model_config = ConfigDict(frozen=True)

    tau_shape: float = constants.TAU_SHAPE
    tau_rate: float = constants.TAU_RATE
    fixed_factor_variance: float = constants.FIXED_FACTOR_VARIANCE
    core_scale: float = constants.CORE_PRIOR_SCALE
    intercept_scale: float = constants.INTERCEPT_PRIOR_SCALE
    iw_extra_dof: float = constants.IW_EXTRA_DOF
    phi_mean: float = constants.PHI_PRIOR_MEAN
    phi_sd: float = constants.PHI_PRIOR_SD
    sigma2_shape: float = constants.SIGMA2_PRIOR_SHAPE
    sigma2_scale: float = constants.SIGMA2_PRIOR_SCALE
    outlier_a: float = constants.OUTLIER_PRIOR_A
    outlier_b: float = constants.OUTLIER_PRIOR_B

    @field_validator(
        "tau_shape", "tau_rate", "fixed_factor_variance", "core_scale", "intercept_scale",
        "phi_sd", "sigma2_shape", "sigma2_scale", "outlier_a", "outlier_b",
    )
    @classmethod
    def validate_positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("prior scales and shapes must be positive")
        return value

    @field_validator("iw_extra_dof")
    @classmethod
    def validate_dof(cls, value: float) -> float:
        # nu_i = I_i + extra must exceed I_i - 1 for a proper inverse-Wishart
        if value <= -1:
            raise ValueError("iw_extra_dof must be greater than -1")
        return value

    def iw_dof(self, dim: int) -> float:
        return dim + self.iw_extra_dof


class SamplerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_iter: int
    n_burn: int = 0
    thin: int = 1
    seed: int | None = None
    ranks: tuple[int, int, int, int, int, int]
    regime: Regime = "homoskedastic"
    shrinkage: bool = True
    trend: bool = False
    decomposition: Decomposition = "tucker"
    eta_step: float = constants.ETA_STEP
    alpha_grid_size: int = constants.ALPHA_GRID_SIZE
    h_step: float = constants.H_STEP
    normalize_sigma: bool = True

    @field_validator("ranks")
    @classmethod
    def validate_ranks(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        return _check_ranks(value)

    @field_validator("eta_step", "h_step")
    @classmethod
    def validate_step(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("proposal scales must be positive")
        return value

    @field_validator("alpha_grid_size")
    @classmethod
    def validate_grid(cls, value: int) -> int:
        if value < 1:
            raise ValueError("alpha_grid_size must be at least 1")
        return value

    @model_validator(mode="after")
    def validate_schedule(self) -> "SamplerConfig":
        if self.n_iter < 1:
            raise ValueError("n_iter must be positive")
        if not 0 <= self.n_burn < self.n_iter:
            raise ValueError("n_burn must satisfy 0 <= n_burn < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.decomposition == "cp" and len(set(self.ranks)) != 1:
            raise ValueError("cp decomposition needs equal ranks in every mode")
        return self

    @property
    def n_draws(self) -> int:
        return -(-(self.n_iter - self.n_burn) // self.thin)


class RunConfig(BaseModel):
    """Flat run configuration read from a ``key = value`` file and CLI flags."""

    model_config = ConfigDict(extra="forbid")

    data: Path
    out: Path = Path("out")
    ranks: tuple[int, int, int, int, int, int] = (2, 2, 2, 2, 2, 2)
    regime: Regime = "homoskedastic"
    trend: bool = False
    shrinkage: bool = True
    decomposition: Decomposition = "tucker"
    n_iter: int = 4000
    n_burn: int = 2000
    thin: int = 2
    seed: int = 0
    chains: int = 1
    normalize_sigma: bool = True
    eta_step: float = constants.ETA_STEP
    alpha_grid_size: int = constants.ALPHA_GRID_SIZE
    h_step: float = constants.H_STEP
    dump_draws: bool = False
    preprocess: str = ""

    tau_shape: float = constants.TAU_SHAPE
    tau_rate: float = constants.TAU_RATE
    fixed_factor_variance: float = constants.FIXED_FACTOR_VARIANCE
    core_scale: float = constants.CORE_PRIOR_SCALE
    intercept_scale: float = constants.INTERCEPT_PRIOR_SCALE
    iw_extra_dof: float = constants.IW_EXTRA_DOF
    phi_mean: float = constants.PHI_PRIOR_MEAN
    phi_sd: float = constants.PHI_PRIOR_SD
    sigma2_shape: float = constants.SIGMA2_PRIOR_SHAPE
    sigma2_scale: float = constants.SIGMA2_PRIOR_SCALE
    outlier_a: float = constants.OUTLIER_PRIOR_A
    outlier_b: float = constants.OUTLIER_PRIOR_B

    @field_validator("ranks", mode="before")
    @classmethod
    def parse_ranks(cls, value):
        if isinstance(value, str):
            value = tuple(int(part) for part in value.split(",") if part.strip())
        return _check_ranks(tuple(value))

    @field_validator("chains")
    @classmethod
    def validate_chains(cls, value: int) -> int:
        if value < 1:
            raise ValueError("chains must be at least 1")
        return value

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            n_iter=self.n_iter,
            n_burn=self.n_burn,
            thin=self.thin,
            seed=self.seed,
            ranks=self.ranks,
            regime=self.regime,
            shrinkage=self.shrinkage,
            trend=self.trend,
            decomposition=self.decomposition,
            eta_step=self.eta_step,
            alpha_grid_size=self.alpha_grid_size,
            h_step=self.h_step,
            normalize_sigma=self.normalize_sigma,
        )

    def prior_config(self) -> PriorConfig:
        fields = PriorConfig.model_fields.keys()
        return PriorConfig(**{name: getattr(self, name) for name in fields})
