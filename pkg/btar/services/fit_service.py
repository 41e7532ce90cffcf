"""Fit orchestration and the files the ``fit``, ``factors`` and ``volatility`` commands exchange."""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from btar.schemas.config import RunConfig
from btar.services.decomposition import TuckerFactors
from btar.services.draws_io import flatten_draws, write_draws
from btar.services.factor_service import FactorSeries, extract_factors
from btar.services.gibbs import PosteriorDraws, identify, run_chains
from btar.services.preprocess import preprocess
from btar.services.series_io import TensorSeries, atomic_write_bytes, ingest, write_csv
from btar.services.tar_model import InterceptTrend
from btar.utils.errors import DataFormatError

logger = logging.getLogger(__name__)

FIT_STATE = "fit_state.npz"
QUANTILES = (0.05, 0.5, 0.95)


@dataclass
class FitResult:
    draws: PosteriorDraws
    identified: TuckerFactors
    series: TensorSeries
    files: list[Path]


@dataclass
class FitState:
    """Everything ``factors`` and ``volatility`` need from a finished fit."""

    data: Path
    preprocess: str
    regime: str
    dims: tuple[int, int, int]
    ranks: tuple[int, ...]
    coefficients: np.ndarray
    intercept: np.ndarray
    trend: np.ndarray | None
    volatility: np.ndarray
    identified: TuckerFactors

    def intercept_trend(self) -> InterceptTrend:
        return InterceptTrend(a0=self.intercept, a1=self.trend)


def load_series(data: str | Path, steps: str = "") -> TensorSeries:
    series = ingest(data)
    if steps:
        series = TensorSeries(values=preprocess(series.values, steps).values, labels=series.labels)
    return series


def volatility_summary(draws: PosteriorDraws) -> np.ndarray:
    """Posterior mean of ``exp(h_t / 2)`` (csv), outlier probability (outlier) or ones."""
    if draws.regime == "csv":
        return np.exp(draws.stacked("h") / 2.0).mean(axis=0)
    if draws.regime == "outlier":
        return draws.stacked("outliers").mean(axis=0)
    return np.ones(draws.n_obs)


def _quantile_rows(name: str, values: np.ndarray) -> dict:
    q = np.quantile(values, QUANTILES)
    return {"parameter": name, "mean": float(np.mean(values)), "q05": q[0], "q50": q[1], "q95": q[2]}


def parameter_table(draws: PosteriorDraws, shrinkage: bool = True) -> pd.DataFrame:
    rows = []
    for mode in (1, 2, 3):
        stack = draws.sigma_factor(mode)
        dim = stack.shape[1]
        for r in range(dim):
            for c in range(r, dim):
                rows.append(_quantile_rows(f"Sigma{mode}[{r + 1},{c + 1}]", stack[:, r, c]))
    if shrinkage and all(s is not None for s in draws.shrink):
        tau, alpha = draws.tau(), draws.alpha()
        rows += [_quantile_rows(f"tau[{m + 1}]", tau[:, m]) for m in range(tau.shape[1])]
        rows += [_quantile_rows(f"alpha[{m + 1}]", alpha[:, m]) for m in range(alpha.shape[1])]
    if draws.regime == "csv":
        rows.append(_quantile_rows("phi", draws.stacked("phi")))
        rows.append(_quantile_rows("sigma2", draws.stacked("sigma2")))
    elif draws.regime == "outlier":
        rows.append(_quantile_rows("p_out", draws.stacked("p_out")))
    rows.append(_quantile_rows("log_lik", draws.stacked("log_lik")))
    return pd.DataFrame(rows, columns=["parameter", "mean", "q05", "q50", "q95"])


def coefficient_table(draws: PosteriorDraws) -> pd.DataFrame:
    mean, sd = draws.coefficient_mean(), draws.coefficient_sd()
    rows, cols = np.indices(mean.shape)
    return pd.DataFrame({
        "row": rows.ravel(order="F") + 1,
        "col": cols.ravel(order="F") + 1,
        "mean": mean.ravel(order="F"),
        "sd": sd.ravel(order="F"),
    })


def intercept_table(draws: PosteriorDraws, series: TensorSeries) -> pd.DataFrame:
    a0 = draws.stacked("intercept").mean(axis=0)
    grid = np.indices(a0.shape).reshape(3, -1, order="F")
    df = pd.DataFrame({
        "i1": [series.axis_labels(1)[k] for k in grid[0]],
        "i2": [series.axis_labels(2)[k] for k in grid[1]],
        "i3": [series.axis_labels(3)[k] for k in grid[2]],
        "a0": a0.ravel(order="F"),
    })
    if draws.trend:
        df["a1"] = draws.stacked("trend").mean(axis=0).ravel(order="F")
    return df


def volatility_table(draws: PosteriorDraws) -> pd.DataFrame:
    df = pd.DataFrame({"t": np.arange(1, draws.n_obs + 1), "omega": draws.stacked("omega").mean(axis=0)})
    if draws.regime == "csv":
        df["exp_half_h"] = volatility_summary(draws)
    elif draws.regime == "outlier":
        df["outlier_prob"] = volatility_summary(draws)
    return df


def save_fit_state(path: str | Path, state: FitState) -> Path:
    f = state.identified
    arrays = {
        "data": np.array(str(state.data)),
        "preprocess": np.array(state.preprocess),
        "regime": np.array(state.regime),
        "dims": np.array(state.dims),
        "ranks": np.array(state.ranks),
        "coefficients": state.coefficients,
        "intercept": state.intercept,
        "volatility": state.volatility,
        "core": f.core,
    }
    if state.trend is not None:
        arrays["trend"] = state.trend
    arrays.update({f"B{m}": b for m, b in enumerate(f.factors, start=1)})
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    return atomic_write_bytes(path, buffer.getvalue())


def load_fit_state(path: str | Path) -> FitState:
    path = Path(path)
    if path.is_dir():
        path = path / FIT_STATE
    if not path.exists():
        raise DataFormatError(f"fit state {path} does not exist; run `fit` first")
    with np.load(path, allow_pickle=False) as npz:
        identified = TuckerFactors(core=npz["core"], factors=tuple(npz[f"B{m}"] for m in range(1, 7)))
        return FitState(
            data=Path(str(npz["data"])),
            preprocess=str(npz["preprocess"]),
            regime=str(npz["regime"]),
            dims=tuple(int(d) for d in npz["dims"]),
            ranks=tuple(int(r) for r in npz["ranks"]),
            coefficients=npz["coefficients"],
            intercept=npz["intercept"],
            trend=npz["trend"] if "trend" in npz.files else None,
            volatility=npz["volatility"],
            identified=identified,
        )


def write_fit_outputs(draws: PosteriorDraws, identified: TuckerFactors, series: TensorSeries,
                      config: RunConfig) -> list[Path]:
    out = Path(config.out)
    files = [
        write_csv(coefficient_table(draws), out / "coefficients.csv"),
        write_csv(parameter_table(draws, config.shrinkage), out / "parameters.csv"),
        write_csv(volatility_table(draws), out / "volatility.csv"),
        write_csv(intercept_table(draws, series), out / "intercept.csv"),
    ]
    state = FitState(
        data=Path(config.data).resolve(),
        preprocess=config.preprocess,
        regime=draws.regime,
        dims=draws.dims,
        ranks=draws.ranks,
        coefficients=draws.coefficient_mean(),
        intercept=draws.stacked("intercept").mean(axis=0),
        trend=draws.stacked("trend").mean(axis=0) if draws.trend else None,
        volatility=volatility_summary(draws),
        identified=identified,
    )
    files.append(save_fit_state(out / FIT_STATE, state))
    if config.dump_draws:
        matrix, names = flatten_draws(draws)
        files.append(write_draws(out / "draws.bin", matrix))
        files.append(write_csv(pd.DataFrame({"parameter": names}), out / "draws_columns.csv"))
    return files


def run_fit(config: RunConfig, threads: int = 1) -> FitResult:
    series = load_series(config.data, config.preprocess)
    logger.info("Fitting %s: dims=%s T=%s chains=%s", config.data, series.dims, series.length - 1, config.chains)
    chains = run_chains(series.values, config.sampler_config(), config.prior_config(),
                        n_chains=config.chains, threads=threads)
    draws = PosteriorDraws.concat(chains)
    identified = identify(draws, config.ranks)
    files = write_fit_outputs(draws, identified, series, config)
    logger.info("Fit outputs written to %s", config.out)
    return FitResult(draws=draws, identified=identified, series=series, files=files)


def factor_frame(values: np.ndarray, labels: list[str]) -> pd.DataFrame:
    df = pd.DataFrame(values, columns=labels)
    df.insert(0, "t", np.arange(1, values.shape[0] + 1))
    return df


def write_factor_outputs(state: FitState, out: str | Path) -> tuple[FactorSeries, list[Path]]:
    series = load_series(state.data, state.preprocess)
    factors = extract_factors(series.values, state.identified, state.intercept_trend())
    out = Path(out)
    files = [
        write_csv(factor_frame(factors.response, factors.response_labels), out / "response_factors.csv"),
        write_csv(factor_frame(factors.predictor, factors.predictor_labels), out / "predictor_factors.csv"),
    ]
    for mode, proj in enumerate(factors.projections, start=1):
        labels = series.axis_labels((mode - 1) % 3 + 1)
        df = pd.DataFrame(proj, columns=labels)
        df.insert(0, "label", labels)
        files.append(write_csv(df, out / f"projection_B{mode}.csv"))
    return factors, files


def write_volatility_series(state: FitState, out: str | Path) -> Path:
    column = {"csv": "exp_half_h", "outlier": "outlier_prob"}.get(state.regime, "scale")
    df = pd.DataFrame({"t": np.arange(1, state.volatility.size + 1), column: state.volatility})
    return write_csv(df, Path(out) / "volatility_series.csv")
