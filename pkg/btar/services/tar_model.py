"""The TAR(1) model ``Y_t = A_t + <B, Y_{t-1}> + E_t`` with Kronecker errors.

A tensor series is a ``numpy.ndarray`` of shape ``(T + 1, I1, I2, I3)``: row 0
is the presample ``y_0`` and rows ``1..T`` are the observations the likelihood
runs over.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from btar import constants
from btar.schemas.config import PriorConfig, Regime
from btar.services.decomposition import (
    TuckerFactors,
    remaining_kron,
    superdiagonal,
    tucker_reconstruct,
)
from btar.services.tensor_ops import (
    gen_inner,
    kron_chain,
    multi_mode_multiply_series,
    unfold,
    unfold_series,
    unvec,
    unvec_series,
    vec,
    vec_series,
)
from btar.utils.errors import ShapeMismatchError, SupportError
from btar.utils.linalg import cholesky, inverse_cholesky, logdet_spd, spd_inverse

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
ETA_EPS = 1e-10


@dataclass
class InterceptTrend:
    a0: np.ndarray
    a1: np.ndarray | None = None

    @classmethod
    def zeros(cls, dims: Sequence[int], trend: bool = False) -> "InterceptTrend":
        dims = tuple(dims)
        return cls(a0=np.zeros(dims), a1=np.zeros(dims) if trend else None)

    @property
    def has_trend(self) -> bool:
        return self.a1 is not None

    def at(self, n_obs: int) -> np.ndarray:
        """``A_t`` for ``t = 1..n_obs`` stacked along a leading axis."""
        out = np.broadcast_to(self.a0, (n_obs,) + self.a0.shape).copy()
        if self.a1 is not None:
            t = np.arange(1, n_obs + 1, dtype=float).reshape((n_obs, 1, 1, 1))
            out += t * self.a1
        return out


@dataclass
class ErrorCov:
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "ErrorCov":
        return cls(*(np.eye(d) for d in dims))

    @property
    def factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.s1, self.s2, self.s3

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(s.shape[0] for s in self.factors)

    def get(self, mode: int) -> np.ndarray:
        return self.factors[mode - 1]

    def with_factor(self, mode: int, value: np.ndarray) -> "ErrorCov":
        parts = list(self.factors)
        parts[mode - 1] = value
        return ErrorCov(*parts)

    def choleskys(self) -> tuple[np.ndarray, ...]:
        return tuple(cholesky(s, what=f"Sigma_{i}") for i, s in enumerate(self.factors, start=1))

    def inverse_choleskys(self) -> tuple[np.ndarray, ...]:
        return tuple(inverse_cholesky(s, what=f"Sigma_{i}") for i, s in enumerate(self.factors, start=1))

    def inverses(self) -> tuple[np.ndarray, ...]:
        return tuple(spd_inverse(s, what=f"Sigma_{i}") for i, s in enumerate(self.factors, start=1))

    def logdet(self) -> float:
        """``log|S3 ⊗ S2 ⊗ S1|`` from the three factor determinants."""
        big_i = int(np.prod(self.dims))
        return sum(
            big_i / s.shape[0] * logdet_spd(s, what=f"Sigma_{i}")
            for i, s in enumerate(self.factors, start=1)
        )

    def full(self) -> np.ndarray:
        return kron_chain([self.s3, self.s2, self.s1])

    def normalized(self) -> "ErrorCov":
        """Rescale S2 and S3 to unit average diagonal, absorbing the scale into S1."""
        c2 = float(np.mean(np.diag(self.s2)))
        c3 = float(np.mean(np.diag(self.s3)))
        return ErrorCov(self.s1 * c2 * c3, self.s2 / c2, self.s3 / c3)


@dataclass
class VolatilityState:
    regime: Regime
    omega: np.ndarray
    h: np.ndarray | None = None
    phi: float = constants.INIT_PHI
    sigma2: float = constants.INIT_SIGMA2
    o: np.ndarray | None = None
    p_out: float = constants.OUTLIER_PRIOR_A / (constants.OUTLIER_PRIOR_A + constants.OUTLIER_PRIOR_B)

    @classmethod
    def initial(cls, regime: Regime, n_obs: int) -> "VolatilityState":
        ones = np.ones(n_obs)
        if regime == "csv":
            return cls(regime=regime, omega=ones, h=np.zeros(n_obs))
        if regime == "outlier":
            return cls(regime=regime, omega=ones, o=ones.copy())
        return cls(regime="homoskedastic", omega=ones)

    def sync_omega(self) -> None:
        if self.regime == "csv":
            self.omega = np.exp(self.h)
        elif self.regime == "outlier":
            self.omega = self.o ** 2
        else:
            self.omega = np.ones_like(self.omega)


@dataclass
class ShrinkageState:
    tau: np.ndarray
    eta: list[np.ndarray]
    alpha: np.ndarray

    @classmethod
    def initial(cls, ranks: Sequence[int]) -> "ShrinkageState":
        return cls(
            tau=np.ones(len(ranks)),
            eta=[np.full(r - 1, 0.5) for r in ranks],
            alpha=np.full(len(ranks), 0.5),
        )

    def phi(self, mode: int) -> np.ndarray:
        eta = self.eta[mode - 1]
        return stick_breaking(eta, eta.size + 1)

    def variances(self, mode: int) -> np.ndarray:
        return self.tau[mode - 1] * self.phi(mode)


@dataclass
class ModelState:
    factors: TuckerFactors
    intercept: InterceptTrend
    cov: ErrorCov
    vol: VolatilityState
    shrink: ShrinkageState | None = None

    def __post_init__(self):
        if self.shrink is None:
            self.shrink = ShrinkageState.initial(self.factors.ranks)
        dims = self.factors.dims
        if dims[:3] != dims[3:]:
            raise ShapeMismatchError(f"response dims {dims[:3]} differ from predictor dims {dims[3:]}")
        if self.cov.dims != dims[:3] or self.intercept.a0.shape != dims[:3]:
            raise ShapeMismatchError("covariance or intercept dims do not match the factor dims")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.factors.dims[:3]

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)

    def margin_variances(self, mode: int, prior: PriorConfig, shrinkage: bool) -> np.ndarray:
        if shrinkage:
            return self.shrink.variances(mode)
        return np.full(self.factors.ranks[mode - 1], prior.fixed_factor_variance)


def split_series(series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(y, x)`` with ``y[t] = Y_{t+1}`` and ``x[t] = Y_t`` (the regressor)."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 4:
        raise ShapeMismatchError(f"expected a (T+1, I1, I2, I3) series, got shape {series.shape}")
    if series.shape[0] < 2:
        raise ShapeMismatchError("series needs a presample y_0 and at least one observation")
    return series[1:], series[:-1]


def coefficient_tensor(f: TuckerFactors) -> np.ndarray:
    return tucker_reconstruct(f)


def var_form(f: TuckerFactors | np.ndarray) -> np.ndarray:
    """I x I matrix ``B_hat`` with ``vec(B_hat) = vec(B)``."""
    b = tucker_reconstruct(f) if isinstance(f, TuckerFactors) else np.asarray(f, dtype=float)
    if b.ndim % 2:
        raise ShapeMismatchError(f"coefficient tensor must have even order, got {b.ndim}")
    big_i = int(np.prod(b.shape[: b.ndim // 2]))
    return np.reshape(vec(b), (big_i, big_i), order="F")


def var_form_to_tensor(b_hat: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    dims = tuple(dims)
    return unvec(vec(b_hat), dims + dims)


def spectral_radius(b_hat: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(b_hat)), initial=0.0))


def core_matrix(f: TuckerFactors) -> np.ndarray:
    """``G~``: the core reshaped to ``(R1 R2 R3) x (R4 R5 R6)``."""
    r = f.ranks
    return np.reshape(vec(f.core), (r[0] * r[1] * r[2], r[3] * r[4] * r[5]), order="F")


def response_loadings(f: TuckerFactors) -> np.ndarray:
    """``B~_m = B3 ⊗ B2 ⊗ B1``."""
    return kron_chain(f.factors[2::-1])


def predictor_loadings(f: TuckerFactors) -> np.ndarray:
    """``B~ = B6 ⊗ B5 ⊗ B4``."""
    return kron_chain(f.factors[:2:-1])


def predictor_factors(f: TuckerFactors, x: np.ndarray) -> np.ndarray:
    """``x_t x1 B4' x2 B5' x3 B6'`` for every t, shape ``(T, R4, R5, R6)``."""
    b4, b5, b6 = f.factors[3:]
    return multi_mode_multiply_series(x, [b4.T, b5.T, b6.T])


def fitted(f: TuckerFactors, x: np.ndarray) -> np.ndarray:
    """``<B, x_t>`` for every t through the factored path."""
    r = f.ranks
    z = vec_series(predictor_factors(f, x)) @ core_matrix(f).T
    z = unvec_series(z, r[:3])
    return multi_mode_multiply_series(z, list(f.factors[:3]))


def residuals(series: np.ndarray, state: ModelState) -> np.ndarray:
    y, x = split_series(series)
    _check_dims(y, state)
    return y - state.intercept.at(y.shape[0]) - fitted(state.factors, x)


def residuals_via_inner(series: np.ndarray, state: ModelState) -> np.ndarray:
    """Residuals through the generalized inner product with the full tensor."""
    y, x = split_series(series)
    _check_dims(y, state)
    b = tucker_reconstruct(state.factors)
    fit = np.stack([gen_inner(b, xt) for xt in x])
    return y - state.intercept.at(y.shape[0]) - fit


def mode_regressor(x_t: np.ndarray, mode: int) -> np.ndarray:
    """``X_it = vec(x_t) ⊗ I`` with the identity sized ``I / I_mode``."""
    k = x_t.size // x_t.shape[mode - 1]
    return np.kron(vec(x_t)[:, None], np.eye(k))


def residuals_by_mode(series: np.ndarray, state: ModelState, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolded residuals ``Y_(i) - A_(i) - B_i G_(i) B_{-i}' X_it``."""
    if not 1 <= mode <= 3:
        raise ShapeMismatchError(f"response mode must be 1, 2 or 3, got {mode}")
    y, x = split_series(series)
    _check_dims(y, state)
    f = state.factors
    coef = f.factors[mode - 1] @ unfold(f.core, mode) @ remaining_kron(f.factors, mode).T
    demeaned = unfold_series(y - state.intercept.at(y.shape[0]), mode)
    return np.stack([d - coef @ mode_regressor(xt, mode) for d, xt in zip(demeaned, x)])


def residuals_vectorized(series: np.ndarray, state: ModelState) -> np.ndarray:
    """Rows ``y_t - a_t - B~_m G~ B~' y_{t-1}``, shape ``(T, I)``."""
    y, x = split_series(series)
    _check_dims(y, state)
    f = state.factors
    coef = response_loadings(f) @ core_matrix(f) @ predictor_loadings(f).T
    return vec_series(y - state.intercept.at(y.shape[0])) - vec_series(x) @ coef.T


def quadratic_forms(resid: np.ndarray, cov: ErrorCov) -> np.ndarray:
    """``vec(E_t)' Sigma^{-1} vec(E_t)`` for every t via per-mode whitening."""
    white = multi_mode_multiply_series(resid, list(cov.inverse_choleskys()))
    return np.sum(vec_series(white) ** 2, axis=1)


def log_likelihood(series: np.ndarray, state: ModelState) -> float:
    resid = residuals(series, state)
    n_obs = resid.shape[0]
    big_i = int(np.prod(state.dims))
    omega = _omega(state, n_obs)
    quad = quadratic_forms(resid, state.cov)
    return float(
        -0.5 * n_obs * big_i * LOG_2PI
        - 0.5 * big_i * np.sum(np.log(omega))
        - 0.5 * n_obs * state.cov.logdet()
        - 0.5 * np.sum(quad / omega)
    )


def simulate(state: ModelState, n_obs: int, y0: np.ndarray, seed=None) -> np.ndarray:
    """Simulate ``n_obs`` observations after ``y0``; the result includes ``y0`` as row 0."""
    rng = np.random.default_rng(seed)
    dims = state.dims
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != dims:
        raise ShapeMismatchError(f"y0 has shape {y0.shape}, expected {dims}")
    b_hat = var_form(state.factors)
    radius = spectral_radius(b_hat)
    if radius >= 1.0:
        logger.warning("Simulating a non-stationary TAR: spectral radius %.4f", radius)
    omega = _omega(state, n_obs)
    lows = state.cov.choleskys()
    z = rng.standard_normal((n_obs,) + dims)
    shocks = multi_mode_multiply_series(z, list(lows)) * np.sqrt(omega).reshape((n_obs, 1, 1, 1))
    drift = state.intercept.at(n_obs)
    out = np.empty((n_obs + 1,) + dims)
    out[0] = y0
    for t in range(n_obs):
        out[t + 1] = drift[t] + unvec(b_hat @ vec(out[t]), dims) + shocks[t]
    return out


def stick_breaking(eta: np.ndarray, rank: int) -> np.ndarray:
    eta = np.asarray(eta, dtype=float).ravel()
    if eta.size != rank - 1:
        raise ShapeMismatchError(f"rank {rank} needs {rank - 1} stick proportions, got {eta.size}")
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - eta)))
    return np.concatenate((eta, [1.0])) * remaining


def log_prior(state: ModelState, prior: PriorConfig, *, shrinkage: bool = True,
              core_fixed: bool = False) -> float:
    """Log prior density of ``state``.

    The uniform prior of ``alpha`` on its grid contributes a constant and is left out.
    """
    total = 0.0
    f = state.factors
    sh = state.shrink
    if shrinkage:
        if np.any(sh.tau <= 0):
            raise SupportError("tau must be positive")
        if np.any(sh.alpha <= 0) or np.any(sh.alpha > 1):
            raise SupportError("alpha must lie in (0, 1]")
        total += float(np.sum(stats.gamma.logpdf(sh.tau, a=prior.tau_shape, scale=1.0 / prior.tau_rate)))
        for mode, eta in enumerate(sh.eta, start=1):
            if np.any(eta <= 0) or np.any(eta >= 1):
                raise SupportError(f"eta of mode {mode} must lie in (0, 1)")
            total += float(np.sum(stats.beta.logpdf(eta, 1.0, sh.alpha[mode - 1])))
    for mode, b in enumerate(f.factors, start=1):
        sd = np.sqrt(state.margin_variances(mode, prior, shrinkage))
        total += float(np.sum(stats.norm.logpdf(b, scale=sd[None, :])))
    if not core_fixed:
        total += float(np.sum(stats.norm.logpdf(f.core, scale=np.sqrt(prior.core_scale))))
    for a in (state.intercept.a0, state.intercept.a1):
        if a is not None:
            total += float(np.sum(stats.norm.logpdf(a, scale=np.sqrt(prior.intercept_scale))))
    for mode, s in enumerate(state.cov.factors, start=1):
        dim = s.shape[0]
        total += float(stats.invwishart.logpdf(s, df=prior.iw_dof(dim), scale=np.eye(dim)))
    total += _log_volatility_prior(state.vol, prior)
    return total


def _log_volatility_prior(vol: VolatilityState, prior: PriorConfig) -> float:
    if np.any(vol.omega <= 0):
        raise SupportError("omega must be positive")
    if vol.regime == "outlier":
        if not 0 < vol.p_out < 1:
            raise SupportError("outlier probability must lie in (0, 1)")
        is_out = vol.o > 1
        n_out = int(np.sum(is_out))
        return float(
            stats.beta.logpdf(vol.p_out, prior.outlier_a, prior.outlier_b)
            + (vol.o.size - n_out) * np.log1p(-vol.p_out)
            + n_out * np.log(vol.p_out / constants.OUTLIER_GRID_SIZE)
        )
    if vol.regime == "csv":
        if not -1 < vol.phi < 1:
            raise SupportError("phi must lie in (-1, 1)")
        if vol.sigma2 <= 0:
            raise SupportError("sigma2 must be positive")
        return float(
            log_phi_prior(vol.phi, prior)
            + stats.invgamma.logpdf(vol.sigma2, prior.sigma2_shape, scale=prior.sigma2_scale)
            + log_ar1_density(vol.h, vol.phi, vol.sigma2)
        )
    return 0.0


def log_phi_prior(phi: float, prior: PriorConfig) -> float:
    lo = (-1.0 - prior.phi_mean) / prior.phi_sd
    hi = (1.0 - prior.phi_mean) / prior.phi_sd
    return float(stats.truncnorm.logpdf(phi, lo, hi, loc=prior.phi_mean, scale=prior.phi_sd))


def log_ar1_density(h: np.ndarray, phi: float, sigma2: float) -> float:
    """Stationary AR(1) log density with ``h_1 ~ N(0, sigma2 / (1 - phi^2))``."""
    first = stats.norm.logpdf(h[0], scale=np.sqrt(sigma2 / (1.0 - phi * phi)))
    rest = stats.norm.logpdf(h[1:] - phi * h[:-1], scale=np.sqrt(sigma2))
    return float(first + np.sum(rest))


def sample_prior(dims: Sequence[int], ranks: Sequence[int], prior: PriorConfig, regime: Regime,
                 n_obs: int, rng: np.random.Generator, *, shrinkage: bool = True,
                 trend: bool = False, core_fixed: bool = False,
                 alpha_grid_size: int = constants.ALPHA_GRID_SIZE) -> ModelState:
    """Draw a complete ``ModelState`` from the prior."""
    dims = tuple(int(d) for d in dims)
    ranks = tuple(int(r) for r in ranks)
    six = dims + dims
    if shrinkage:
        grid = alpha_grid(alpha_grid_size)
        alpha = rng.choice(grid, size=6)
        tau = rng.gamma(prior.tau_shape, 1.0 / prior.tau_rate, size=6)
        # Beta(1, alpha) draws with small alpha can round to exactly 1.0
        eta = [np.clip(rng.beta(1.0, a, size=r - 1), ETA_EPS, 1.0 - ETA_EPS) for a, r in zip(alpha, ranks)]
        shrink = ShrinkageState(tau=tau, eta=eta, alpha=alpha)
        variances = [shrink.variances(mode) for mode in range(1, 7)]
    else:
        shrink = ShrinkageState.initial(ranks)
        variances = [np.full(r, prior.fixed_factor_variance) for r in ranks]
    factors = tuple(
        rng.standard_normal((i, r)) * np.sqrt(v)[None, :] for i, r, v in zip(six, ranks, variances)
    )
    if core_fixed:
        core = superdiagonal(ranks[0], 6)
    else:
        core = rng.standard_normal(ranks) * np.sqrt(prior.core_scale)
    scale_a = np.sqrt(prior.intercept_scale)
    intercept = InterceptTrend(
        a0=rng.standard_normal(dims) * scale_a,
        a1=rng.standard_normal(dims) * scale_a if trend else None,
    )
    cov = ErrorCov(*(
        np.atleast_2d(stats.invwishart.rvs(df=prior.iw_dof(d), scale=np.eye(d), random_state=rng))
        for d in dims
    ))
    vol = VolatilityState.initial(regime, n_obs)
    if regime == "outlier":
        vol.p_out = float(rng.beta(prior.outlier_a, prior.outlier_b))
        flags = rng.random(n_obs) < vol.p_out
        vol.o = np.where(flags, rng.choice(outlier_grid(), size=n_obs), 1.0)
    elif regime == "csv":
        lo = (-1.0 - prior.phi_mean) / prior.phi_sd
        hi = (1.0 - prior.phi_mean) / prior.phi_sd
        vol.phi = float(stats.truncnorm.rvs(lo, hi, loc=prior.phi_mean, scale=prior.phi_sd, random_state=rng))
        vol.sigma2 = float(stats.invgamma.rvs(prior.sigma2_shape, scale=prior.sigma2_scale, random_state=rng))
        h = np.empty(n_obs)
        h[0] = rng.normal(0.0, np.sqrt(vol.sigma2 / (1.0 - vol.phi ** 2)))
        for t in range(1, n_obs):
            h[t] = vol.phi * h[t - 1] + rng.normal(0.0, np.sqrt(vol.sigma2))
        vol.h = h
    vol.sync_omega()
    return ModelState(
        factors=TuckerFactors(core=core, factors=factors),
        intercept=intercept,
        cov=cov,
        vol=vol,
        shrink=shrink,
    )


def alpha_grid(size: int) -> np.ndarray:
    """Equally spaced grid on ``(0, 1]``."""
    return np.linspace(1.0 / size, 1.0, size)


def outlier_grid() -> np.ndarray:
    """Midpoints of an equal partition of ``(OUTLIER_LOW, OUTLIER_HIGH)``."""
    n = constants.OUTLIER_GRID_SIZE
    width = (constants.OUTLIER_HIGH - constants.OUTLIER_LOW) / n
    return constants.OUTLIER_LOW + width * (np.arange(n) + 0.5)


def _omega(state: ModelState, n_obs: int) -> np.ndarray:
    if state.vol.regime == "homoskedastic":
        return np.ones(n_obs)
    omega = np.asarray(state.vol.omega, dtype=float)
    if omega.shape != (n_obs,):
        raise ShapeMismatchError(f"volatility path has length {omega.size}, expected {n_obs}")
    return omega


def _check_dims(y: np.ndarray, state: ModelState) -> None:
    if tuple(y.shape[1:]) != state.dims:
        raise ShapeMismatchError(f"data dims {tuple(y.shape[1:])} do not match model dims {state.dims}")
