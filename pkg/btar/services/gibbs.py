"""Gibbs sampler for the Tucker TAR(1) model."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from btar import constants
from btar.schemas.config import PriorConfig, SamplerConfig
from btar.services.conditionals import (
    core_conditional,
    factor_conditional,
    factor_from_parameter,
    intercept_conditional,
    sigma_posterior,
)
from btar.services.decomposition import (
    TuckerFactors,
    hosvd,
    sign_normalize,
    superdiagonal,
)
from btar.services.shrinkage import sample_shrinkage
from btar.services.tar_model import (
    ErrorCov,
    InterceptTrend,
    ModelState,
    ShrinkageState,
    VolatilityState,
    log_likelihood,
    split_series,
    var_form,
    var_form_to_tensor,
)
from btar.services.tensor_ops import unvec, vec_series
from btar.services.volatility import sample_volatility
from btar.utils.errors import BtarError, SamplerError, ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in output of one or more chains."""

    dims: tuple[int, int, int]
    ranks: tuple[int, ...]
    regime: str
    n_obs: int
    factors: list[TuckerFactors] = field(default_factory=list)
    sigma: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)
    intercept: list[np.ndarray] = field(default_factory=list)
    trend: list[np.ndarray] = field(default_factory=list)
    omega: list[np.ndarray] = field(default_factory=list)
    h: list[np.ndarray] = field(default_factory=list)
    outliers: list[np.ndarray] = field(default_factory=list)
    phi: list[float] = field(default_factory=list)
    sigma2: list[float] = field(default_factory=list)
    p_out: list[float] = field(default_factory=list)
    shrink: list[ShrinkageState] = field(default_factory=list)
    log_lik: list[float] = field(default_factory=list)
    acceptance: dict[str, float] = field(default_factory=dict)
    coef_sum: np.ndarray | None = None
    coef_sumsq: np.ndarray | None = None

    def record(self, state: ModelState, log_lik: float) -> None:
        f = state.factors
        self.factors.append(f)
        self.sigma.append(tuple(s.copy() for s in state.cov.factors))
        self.intercept.append(state.intercept.a0.copy())
        if state.intercept.a1 is not None:
            self.trend.append(state.intercept.a1.copy())
        vol = state.vol
        self.omega.append(np.asarray(vol.omega, dtype=float).copy())
        if vol.regime == "csv":
            self.h.append(vol.h.copy())
            self.phi.append(vol.phi)
            self.sigma2.append(vol.sigma2)
        elif vol.regime == "outlier":
            self.outliers.append(vol.o > 1.0)
            self.p_out.append(vol.p_out)
        self.shrink.append(state.shrink)
        self.log_lik.append(float(log_lik))
        coef = var_form(f)
        if self.coef_sum is None:
            self.coef_sum = np.zeros_like(coef)
            self.coef_sumsq = np.zeros_like(coef)
        self.coef_sum += coef
        self.coef_sumsq += coef * coef

    @property
    def n_draws(self) -> int:
        return len(self.factors)

    def coefficient_mean(self) -> np.ndarray:
        """Posterior mean of the VAR-form coefficient matrix."""
        return self.coef_sum / self.n_draws

    def coefficient_sd(self) -> np.ndarray:
        mean = self.coefficient_mean()
        var = self.coef_sumsq / self.n_draws - mean * mean
        return np.sqrt(np.maximum(var, 0.0))

    def coefficient_tensor_mean(self) -> np.ndarray:
        return var_form_to_tensor(self.coefficient_mean(), self.dims)

    def stacked(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def tau(self) -> np.ndarray:
        return np.stack([s.tau for s in self.shrink])

    def alpha(self) -> np.ndarray:
        return np.stack([s.alpha for s in self.shrink])

    def sigma_factor(self, mode: int) -> np.ndarray:
        return np.stack([s[mode - 1] for s in self.sigma])

    @classmethod
    def concat(cls, chains: list["PosteriorDraws"]) -> "PosteriorDraws":
        first = chains[0]
        out = cls(dims=first.dims, ranks=first.ranks, regime=first.regime, n_obs=first.n_obs)
        list_fields = ("factors", "sigma", "intercept", "trend", "omega", "h", "outliers",
                       "phi", "sigma2", "p_out", "shrink", "log_lik")
        for chain in chains:
            for name in list_fields:
                getattr(out, name).extend(getattr(chain, name))
        out.coef_sum = sum(c.coef_sum for c in chains)
        out.coef_sumsq = sum(c.coef_sumsq for c in chains)
        keys = set().union(*(c.acceptance for c in chains))
        out.acceptance = {k: float(np.mean([c.acceptance[k] for c in chains if k in c.acceptance])) for k in keys}
        return out


def _factor_shape(state: ModelState, mode: int) -> tuple[int, int]:
    return state.factors.factors[mode - 1].shape


def sample_factor(mode: int, state: ModelState, series: np.ndarray, rng: np.random.Generator, *,
                  prior: PriorConfig, shrinkage: bool) -> np.ndarray:
    cond = factor_conditional(mode, state, series, state.margin_variances(mode, prior, shrinkage))
    return factor_from_parameter(mode, cond.draw(rng), _factor_shape(state, mode))


def sample_factor_123(mode: int, state: ModelState, series: np.ndarray, rng: np.random.Generator, *,
                      prior: PriorConfig, shrinkage: bool) -> np.ndarray:
    if mode not in (1, 2, 3):
        raise ValueError(f"response factor mode must be 1, 2 or 3, got {mode}")
    return sample_factor(mode, state, series, rng, prior=prior, shrinkage=shrinkage)


def sample_factor_4(state, series, rng, *, prior, shrinkage) -> np.ndarray:
    return sample_factor(4, state, series, rng, prior=prior, shrinkage=shrinkage)


def sample_factor_5(state, series, rng, *, prior, shrinkage) -> np.ndarray:
    return sample_factor(5, state, series, rng, prior=prior, shrinkage=shrinkage)


def sample_factor_6(state, series, rng, *, prior, shrinkage) -> np.ndarray:
    return sample_factor(6, state, series, rng, prior=prior, shrinkage=shrinkage)


def sample_core(state: ModelState, series: np.ndarray, rng: np.random.Generator, *,
                prior: PriorConfig) -> np.ndarray:
    cond = core_conditional(state, series, prior.core_scale)
    return unvec(cond.draw(rng), state.factors.ranks)


def sample_intercept(state: ModelState, series: np.ndarray, rng: np.random.Generator, *,
                     prior: PriorConfig) -> InterceptTrend:
    draw = intercept_conditional(state, series, prior.intercept_scale).draw(rng)
    return InterceptTrend(a0=draw[0], a1=draw[1] if state.intercept.has_trend else None)


def sample_sigma(mode: int, state: ModelState, series: np.ndarray, rng: np.random.Generator, *,
                 prior: PriorConfig, normalize: bool = True) -> ErrorCov:
    dim = state.dims[mode - 1]
    df, scale = sigma_posterior(mode, state, series, prior.iw_dof(dim))
    draw = np.atleast_2d(stats.invwishart.rvs(df=df, scale=scale, random_state=rng))
    cov = state.cov.with_factor(mode, draw)
    return cov.normalized() if normalize else cov


class AcceptanceCounter:
    def __init__(self):
        self.counts: dict[str, list[int]] = {}

    def add(self, name: str, accepted: int, proposed: int) -> None:
        slot = self.counts.setdefault(name, [0, 0])
        slot[0] += accepted
        slot[1] += proposed

    def rates(self) -> dict[str, float]:
        return {k: a / p for k, (a, p) in self.counts.items() if p > 0}


def gibbs_sweep(state: ModelState, series: np.ndarray, rng: np.random.Generator, *,
                config: SamplerConfig, prior: PriorConfig, sweep: int = 0,
                counter: AcceptanceCounter | None = None) -> ModelState:
    """One full sweep: B1..B6, core, intercept, Sigma_1..3, shrinkage, volatility."""
    state = state.copy()
    counter = counter or AcceptanceCounter()
    blocks: list[tuple[str, Callable[[], None]]] = []

    def factor_block(mode: int):
        def run():
            new = sample_factor(mode, state, series, rng, prior=prior, shrinkage=config.shrinkage)
            state.factors = state.factors.replace(mode=mode, factor=new)
        return run

    def core_block():
        state.factors = state.factors.replace(core=sample_core(state, series, rng, prior=prior))

    def intercept_block():
        state.intercept = sample_intercept(state, series, rng, prior=prior)

    def sigma_block(mode: int):
        def run():
            state.cov = sample_sigma(mode, state, series, rng, prior=prior, normalize=config.normalize_sigma)
        return run

    def shrinkage_block():
        state.shrink, (acc, prop) = sample_shrinkage(
            state, rng, prior=prior, eta_step=config.eta_step, alpha_grid_size=config.alpha_grid_size
        )
        counter.add("eta", acc, prop)

    def volatility_block():
        state.vol, counts = sample_volatility(state, series, rng, prior=prior, h_step=config.h_step)
        for name, (acc, prop) in counts.items():
            counter.add(name, acc, prop)

    blocks.extend((f"B{mode}", factor_block(mode)) for mode in range(1, 7))
    if config.decomposition == "tucker":
        blocks.append(("core", core_block))
    blocks.append(("intercept", intercept_block))
    blocks.extend((f"Sigma{mode}", sigma_block(mode)) for mode in range(1, 4))
    if config.shrinkage:
        blocks.append(("shrinkage", shrinkage_block))
    blocks.append(("volatility", volatility_block))

    for name, run in blocks:
        try:
            run()
        except BtarError as exc:
            raise SamplerError(str(exc), sweep=sweep, block=name) from exc
    return state


def least_squares_var(series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """OLS VAR(1) on ``vec(Y_t)``: returns ``(B_hat, intercept)``."""
    y, x = split_series(series)
    yv, xv = vec_series(y), vec_series(x)
    design = np.column_stack([np.ones(xv.shape[0]), xv])
    coef, *_ = np.linalg.lstsq(design, yv, rcond=None)
    return coef[1:].T, coef[0]


def initial_state(series: np.ndarray, config: SamplerConfig, rng: np.random.Generator) -> ModelState:
    y, _ = split_series(series)
    n_obs = y.shape[0]
    dims = tuple(y.shape[1:])
    big_i = int(np.prod(dims))
    ranks = config.ranks
    intercept = InterceptTrend.zeros(dims, config.trend)
    if n_obs * big_i >= big_i * (big_i + 1):
        b_hat, a0 = least_squares_var(series)
        f = sign_normalize(hosvd(var_form_to_tensor(b_hat, dims), ranks))
        intercept.a0 = unvec(a0, dims)
        logger.debug("Initialized factors from the least-squares VAR(1)")
    else:
        six = dims + dims
        f = TuckerFactors(
            core=rng.standard_normal(ranks) * constants.INIT_FACTOR_SD,
            factors=tuple(rng.standard_normal((i, r)) * constants.INIT_FACTOR_SD for i, r in zip(six, ranks)),
        )
    if config.decomposition == "cp":
        f = f.replace(core=superdiagonal(ranks[0], 6))
    return ModelState(
        factors=f,
        intercept=intercept,
        cov=ErrorCov.identity(dims),
        vol=VolatilityState.initial(config.regime, n_obs),
        shrink=ShrinkageState.initial(ranks),
    )


def run_gibbs(series: np.ndarray, config: SamplerConfig, prior: PriorConfig | None = None, *,
              init: ModelState | None = None, rng: np.random.Generator | None = None) -> PosteriorDraws:
    series = np.asarray(series, dtype=float)
    y, _ = split_series(series)
    if y.shape[0] < 2:
        raise ShapeMismatchError("the sampler needs at least two observations after the presample")
    prior = prior or PriorConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    state = init.copy() if init is not None else initial_state(series, config, rng)
    draws = PosteriorDraws(dims=state.dims, ranks=tuple(config.ranks), regime=config.regime, n_obs=y.shape[0])
    counter = AcceptanceCounter()
    started = time.perf_counter()
    logger.info("Gibbs run: dims=%s ranks=%s regime=%s n_iter=%s", state.dims, config.ranks,
                config.regime, config.n_iter)
    for it in range(config.n_iter):
        state = gibbs_sweep(state, series, rng, config=config, prior=prior, sweep=it, counter=counter)
        if it >= config.n_burn and (it - config.n_burn) % config.thin == 0:
            draws.record(state, log_likelihood(series, state))
        if (it + 1) % 500 == 0:
            logger.debug("Gibbs sweep %s/%s", it + 1, config.n_iter)
    draws.acceptance = counter.rates()
    for name, rate in draws.acceptance.items():
        if not constants.ACCEPTANCE_LOW <= rate <= constants.ACCEPTANCE_HIGH:
            logger.warning("Acceptance rate of %s is %.3f, outside [%.1f, %.1f]", name, rate,
                           constants.ACCEPTANCE_LOW, constants.ACCEPTANCE_HIGH)
    logger.info("Gibbs run finished: %s draws in %.1fs", draws.n_draws, time.perf_counter() - started)
    return draws


def run_chains(series: np.ndarray, config: SamplerConfig, prior: PriorConfig | None = None, *,
               n_chains: int = 1, threads: int = 1) -> list[PosteriorDraws]:
    """Independent chains on spawned seed streams; results ordered by chain index."""
    streams = np.random.SeedSequence(config.seed).spawn(n_chains)

    def one(k: int) -> PosteriorDraws:
        logger.info("Starting chain %s/%s", k + 1, n_chains)
        return run_gibbs(series, config, prior, rng=np.random.default_rng(streams[k]))

    if threads <= 1 or n_chains == 1:
        return [one(k) for k in range(n_chains)]
    return Parallel(n_jobs=min(threads, n_chains), prefer="threads")(delayed(one)(k) for k in range(n_chains))


def identify(draws: PosteriorDraws, ranks) -> TuckerFactors:
    """HOSVD of the posterior-mean coefficient tensor followed by sign normalization."""
    return sign_normalize(hosvd(draws.coefficient_tensor_mean(), tuple(ranks)))
