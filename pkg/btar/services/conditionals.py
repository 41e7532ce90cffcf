"""Exact conditional posteriors of the Gaussian and inverse-Wishart blocks.

Every Gaussian block is returned as a ``GaussianConditional`` (precision and
linear term) so the sampler can draw from it and tests can compare its mean
against dense least-squares oracles.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from btar.services.decomposition import TuckerFactors
from btar.services.tar_model import (
    ModelState,
    core_matrix,
    fitted,
    predictor_factors,
    residuals,
    response_loadings,
    split_series,
)
from btar.services.tensor_ops import (
    kron_chain,
    multi_mode_multiply_series,
    unfold_series,
    unvec,
    unvec_series,
    vec,
    vec_series,
)
from btar.utils.errors import NotPositiveDefiniteError, ShapeMismatchError, SingularPrecisionError
from btar.utils.linalg import symmetrize


@dataclass(frozen=True)
class GaussianConditional:
    """``N(K^{-1} l, K^{-1})`` in canonical form."""

    precision: np.ndarray
    linear: np.ndarray

    @cached_property
    def _chol(self) -> np.ndarray:
        try:
            return linalg.cholesky(symmetrize(self.precision), lower=True)
        except linalg.LinAlgError as exc:
            raise SingularPrecisionError(
                f"posterior precision of size {self.precision.shape[0]} is not positive definite"
            ) from exc

    def mean(self) -> np.ndarray:
        return linalg.cho_solve((self._chol, True), self.linear)

    def covariance(self) -> np.ndarray:
        return linalg.cho_solve((self._chol, True), np.eye(self.linear.size))

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(self.linear.size)
        return self.mean() + linalg.solve_triangular(self._chol.T, z, lower=False)


@dataclass(frozen=True)
class InterceptConditional:
    """Conditional of ``[vec(A0), vec(A1)]`` in the eigenbasis of the three Sigma factors.

    Each rotated coordinate has an independent 1x1 (no trend) or 2x2 (trend)
    precision block, so the I x I precision is never assembled.
    """

    rotations: tuple[np.ndarray, np.ndarray, np.ndarray]
    precisions: np.ndarray
    linear: np.ndarray
    dims: tuple[int, int, int]

    def _rotated_mean(self) -> np.ndarray:
        return np.linalg.solve(self.precisions, self.linear[..., None])[..., 0]

    def _unrotate(self, coords: np.ndarray) -> np.ndarray:
        out = unvec_series(coords.T, self.dims)
        return multi_mode_multiply_series(out, list(self.rotations))

    def mean(self) -> np.ndarray:
        """Shape ``(k, I1, I2, I3)``: row 0 is ``A0``, row 1 (trend only) ``A1``."""
        return self._unrotate(self._rotated_mean())

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        try:
            low = np.linalg.cholesky(self.precisions)
        except np.linalg.LinAlgError as exc:
            raise SingularPrecisionError("intercept precision is not positive definite") from exc
        z = rng.standard_normal(self.linear.shape)
        noise = np.linalg.solve(np.swapaxes(low, -1, -2), z[..., None])[..., 0]
        return self._unrotate(self._rotated_mean() + noise)


def commutation_matrix(r5: int, r6: int) -> np.ndarray:
    """0/1 matrix with ``P[k, q] = 1`` for ``k = (r5-1) R6 + r6`` and ``q = (r6-1) R5 + r5``."""
    p = np.zeros((r5 * r6, r5 * r6))
    for a in range(r5):
        for b in range(r6):
            p[a * r6 + b, b * r5 + a] = 1.0
    return p


def _partial_products(mode: int, f: TuckerFactors, x: np.ndarray) -> np.ndarray:
    """``unfold_j(x_t x_k B_k' for k != j)`` stacked over t, with ``j = mode - 3``."""
    if mode not in (4, 5, 6):
        raise ShapeMismatchError(f"predictor mode must be 4, 5 or 6, got {mode}")
    j = mode - 3
    mats = [b.T for b in f.factors[3:]]
    mats[j - 1] = None
    return unfold_series(multi_mode_multiply_series(x, mats), j)


def _design_from_partial(mode: int, c: np.ndarray, ranks: tuple[int, ...]) -> np.ndarray:
    if mode == 4:
        return np.kron(c.T, np.eye(ranks[3]))
    if mode == 5:
        perm = np.kron(commutation_matrix(ranks[4], ranks[5]).T, np.eye(ranks[3]))
        return perm @ np.kron(np.eye(ranks[4]), c.T)
    if mode == 6:
        return np.kron(np.eye(ranks[5]), c.T)
    raise ShapeMismatchError(f"predictor mode must be 4, 5 or 6, got {mode}")


def predictor_design(mode: int, f: TuckerFactors, x_t: np.ndarray) -> np.ndarray:
    """Matrix ``H`` with ``H theta = vec(x_t x1 B4' x2 B5' x3 B6')``.

    ``theta`` is ``vec(B4')`` for mode 4, ``vec(B5)`` for mode 5 and ``vec(B6)`` for mode 6.
    """
    c = _partial_products(mode, f, np.asarray(x_t, dtype=float)[None])[0]
    return _design_from_partial(mode, c, f.ranks)


def design_b4(f: TuckerFactors, x_t: np.ndarray) -> np.ndarray:
    return predictor_design(4, f, x_t)


def design_b5(f: TuckerFactors, x_t: np.ndarray) -> np.ndarray:
    return predictor_design(5, f, x_t)


def design_b6(f: TuckerFactors, x_t: np.ndarray) -> np.ndarray:
    return predictor_design(6, f, x_t)


def regression_design(mode: int, f: TuckerFactors, x_t: np.ndarray) -> np.ndarray:
    """Full regression matrix ``B~_m G~ H`` mapping the mode parameter to ``vec(<B, x_t>)``."""
    return response_loadings(f) @ core_matrix(f) @ predictor_design(mode, f, x_t)


def factor_parameter(mode: int, b: np.ndarray) -> np.ndarray:
    """Vector the conditional of ``mode`` is written in."""
    return vec(b.T) if mode == 4 else vec(b)


def factor_from_parameter(mode: int, theta: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if mode == 4:
        return unvec(theta, (shape[1], shape[0])).T
    return unvec(theta, shape)


def _prior_precision_diag(mode: int, dim: int, variances: np.ndarray) -> np.ndarray:
    inv = 1.0 / np.asarray(variances, dtype=float)
    if mode == 4:
        return np.tile(inv, dim)
    return np.repeat(inv, dim)


def _weights(state: ModelState, n_obs: int) -> np.ndarray:
    if state.vol.regime == "homoskedastic":
        return np.ones(n_obs)
    return 1.0 / np.asarray(state.vol.omega, dtype=float)


def _demeaned(series: np.ndarray, state: ModelState) -> tuple[np.ndarray, np.ndarray]:
    y, x = split_series(series)
    if tuple(y.shape[1:]) != state.dims:
        raise ShapeMismatchError(f"data dims {tuple(y.shape[1:])} do not match model dims {state.dims}")
    return y - state.intercept.at(y.shape[0]), x


def _response_gram(f: TuckerFactors, inverses) -> np.ndarray:
    """``B~_m' Sigma^{-1} B~_m``."""
    return kron_chain([f.factors[k].T @ inverses[k] @ f.factors[k] for k in (2, 1, 0)])


def factor_conditional(mode: int, state: ModelState, series: np.ndarray,
                       prior_variances: np.ndarray) -> GaussianConditional:
    """Conditional of factor ``mode`` given every other block.

    ``prior_variances`` holds the prior variance of each of its ``R_i`` margins;
    ``numpy.inf`` gives the flat-prior limit.
    """
    if not 1 <= mode <= 6:
        raise ShapeMismatchError(f"factor mode must lie in 1..6, got {mode}")
    f = state.factors
    d, x = _demeaned(series, state)
    w = _weights(state, d.shape[0])
    inverses = state.cov.inverses()
    twice_white = multi_mode_multiply_series(d, list(inverses))
    dim = f.factors[mode - 1].shape[0]
    prior = np.diag(_prior_precision_diag(mode, dim, prior_variances))

    if mode <= 3:
        z = unvec_series(vec_series(predictor_factors(f, x)) @ core_matrix(f).T, f.ranks[:3])
        mats = list(f.factors[:3])
        mats[mode - 1] = None
        q = multi_mode_multiply_series(z, mats)
        whitened = [inv if k != mode - 1 else None for k, inv in enumerate(inverses)]
        p = unfold_series(q, mode)
        ps = unfold_series(multi_mode_multiply_series(q, whitened), mode)
        gram = np.einsum("t,tra,tsa->rs", w, p, ps)
        cross = np.einsum("t,tia,tra->ir", w, unfold_series(twice_white, mode), p)
        precision = np.kron(symmetrize(gram), inverses[mode - 1]) + prior
        return GaussianConditional(precision=precision, linear=vec(cross))

    g = core_matrix(f)
    weight = g.T @ _response_gram(f, inverses) @ g
    u = vec_series(multi_mode_multiply_series(twice_white, [b.T for b in f.factors[:3]]))
    c = _partial_products(mode, f, x)
    precision = prior.copy()
    linear = np.zeros(prior.shape[0])
    for w_t, c_t, u_t in zip(w, c, u):
        h = _design_from_partial(mode, c_t, f.ranks)
        precision += w_t * (h.T @ weight @ h)
        linear += w_t * (h.T @ (g.T @ u_t))
    return GaussianConditional(precision=precision, linear=linear)


def core_conditional(state: ModelState, series: np.ndarray, prior_scale: float) -> GaussianConditional:
    """Conditional of ``vec(G)`` with prior ``N(0, prior_scale I)``."""
    f = state.factors
    d, x = _demeaned(series, state)
    w = _weights(state, d.shape[0])
    inverses = state.cov.inverses()
    twice_white = multi_mode_multiply_series(d, list(inverses))
    fv = vec_series(predictor_factors(f, x))
    u = vec_series(multi_mode_multiply_series(twice_white, [b.T for b in f.factors[:3]]))
    outer = np.einsum("t,ta,tb->ab", w, fv, fv)
    precision = np.kron(symmetrize(outer), _response_gram(f, inverses))
    precision += np.eye(precision.shape[0]) / prior_scale
    linear = vec(np.einsum("t,ta,tb->ab", w, u, fv))
    return GaussianConditional(precision=precision, linear=linear)


def intercept_conditional(state: ModelState, series: np.ndarray, prior_scale: float) -> InterceptConditional:
    """Conditional of ``A0`` (and ``A1`` when the trend is on) with prior ``N(0, prior_scale I)``."""
    y, x = split_series(series)
    n_obs = y.shape[0]
    dims = state.dims
    w = _weights(state, n_obs)
    eig = [linalg.eigh(s) for s in state.cov.factors]
    lam = vec(np.multiply.outer(np.multiply.outer(eig[0][0], eig[1][0]), eig[2][0]))
    if np.any(lam <= 0):
        raise NotPositiveDefiniteError("error covariance factors must be positive definite")
    rotations = tuple(e[1] for e in eig)
    rho = vec_series(multi_mode_multiply_series(y - fitted(state.factors, x), [q.T for q in rotations]))
    t = np.arange(1, n_obs + 1, dtype=float)
    basis = np.column_stack([np.ones(n_obs), t]) if state.intercept.has_trend else np.ones((n_obs, 1))
    gram = np.einsum("t,tj,tk->jk", w, basis, basis)
    precisions = gram[None, :, :] / lam[:, None, None] + np.eye(basis.shape[1])[None] / prior_scale
    linear = np.einsum("t,tj,ti->ij", w, basis, rho) / lam[:, None]
    return InterceptConditional(rotations=rotations, precisions=precisions, linear=linear, dims=dims)


def sigma_posterior(mode: int, state: ModelState, series: np.ndarray,
                    prior_dof: float, prior_scale: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Inverse-Wishart ``(df, scale)`` of ``Sigma_mode`` given the residuals."""
    if not 1 <= mode <= 3:
        raise ShapeMismatchError(f"covariance mode must be 1, 2 or 3, got {mode}")
    resid = residuals(series, state)
    n_obs = resid.shape[0]
    dim = state.dims[mode - 1]
    others = [inv if k != mode - 1 else None for k, inv in enumerate(state.cov.inverses())]
    e = unfold_series(resid, mode)
    es = unfold_series(multi_mode_multiply_series(resid, others), mode)
    w = _weights(state, n_obs)
    prior_scale = np.eye(dim) if prior_scale is None else prior_scale
    scale = prior_scale + np.einsum("t,tia,tja->ij", w, e, es)
    df = prior_dof + n_obs * int(np.prod(state.dims)) // dim
    return float(df), symmetrize(scale)
