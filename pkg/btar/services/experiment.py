"""Benchmark harness: DGP grid x sample sizes x estimators x seeds."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from btar.schemas.bench import DgpSpec, SuiteSpec
from btar.schemas.config import SamplerConfig
from btar.services.dgp import generate
from btar.services.gibbs import run_gibbs
from btar.services.minnesota import bvar_minnesota

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "dgp", "dims", "ranks", "T", "estimator", "seed",
    "rmse", "relative_rmse", "relative_rmse_fixed", "wall_ms", "error",
]


@dataclass
class BenchRow:
    dgp: str
    dims: str
    ranks: str
    T: int
    estimator: str
    seed: int
    rmse: float
    relative_rmse: float = float("nan")
    relative_rmse_fixed: float = float("nan")
    wall_ms: float = 0.0
    error: str = ""


def rmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(f"estimate shape {estimate.shape} differs from truth shape {truth.shape}")
    return float(np.linalg.norm(estimate - truth) / np.sqrt(truth.size))


def _fmt(values) -> str:
    return "" if values is None else ",".join(str(v) for v in values)


def _estimators(suite: SuiteSpec, dgp: DgpSpec) -> list[tuple[str, dict | None]]:
    """Name and sampler settings of every estimator; ``None`` marks the Minnesota baseline."""
    ranks = suite.fit_ranks or dgp.ranks
    out: list[tuple[str, dict | None]] = []
    for name in suite.estimators:
        if name == "bvar-minn":
            out.append((name, None))
        elif name == "btar-cp":
            rank = suite.cp_rank or max(ranks)
            out.append((name, {"ranks": (rank,) * 6, "decomposition": "cp", "shrinkage": False}))
        elif name == "btar-tk":
            out.append((name, {"ranks": tuple(ranks), "shrinkage": False}))
        else:
            out.append((name, {"ranks": tuple(ranks), "shrinkage": True}))
    dims = tuple(dgp.dims) * 2
    for k in suite.rank_sweep:
        sweep = tuple(min(k, d) for d in dims)
        out.append((f"btar-tk-r{k}", {"ranks": sweep, "shrinkage": False}))
    return out


def fit_estimator(series: np.ndarray, settings: dict | None, suite: SuiteSpec, seed: int) -> np.ndarray:
    """Point estimate of the VAR-form coefficient matrix."""
    if settings is None:
        return bvar_minnesota(series, suite.kappa1, suite.kappa2).coefficients
    config = SamplerConfig(n_iter=suite.n_iter, n_burn=suite.n_burn, thin=suite.thin, seed=seed, **settings)
    return run_gibbs(series, config).coefficient_mean()


def run_cell(suite: SuiteSpec, dgp: DgpSpec, n_obs: int, seed: int) -> list[BenchRow]:
    """Fit every estimator on one simulated data set; failures are recorded in the ``error`` column."""
    spec = dgp.model_copy(update={"T": n_obs, "seed": seed})
    draw, dgp_error = None, ""
    try:
        draw = generate(spec)
    except Exception as exc:
        logger.exception("DGP %s failed at T=%s seed=%s", dgp.kind, n_obs, seed)
        dgp_error = f"dgp {type(exc).__name__}: {exc}"
    rows = []
    for name, settings in _estimators(suite, dgp):
        started = time.perf_counter()
        row = BenchRow(dgp=dgp.kind, dims="x".join(map(str, dgp.dims)), ranks=_fmt(dgp.ranks),
                       T=n_obs, estimator=name, seed=seed, rmse=float("nan"), error=dgp_error)
        if draw is not None:
            try:
                row.rmse = rmse(fit_estimator(draw.series, settings, suite, seed), draw.b_hat)
            except Exception as exc:
                logger.exception("Estimator %s failed on %s T=%s seed=%s", name, dgp.kind, n_obs, seed)
                row.error = f"{type(exc).__name__}: {exc}"
        row.wall_ms = round(1000.0 * (time.perf_counter() - started), 3)
        rows.append(row)
    logger.info("Suite cell done: %s T=%s seed=%s", dgp.kind, n_obs, seed)
    return rows


def _add_relative(df: pd.DataFrame) -> pd.DataFrame:
    keys = ["dgp", "dims", "ranks", "seed"]
    base = df[df["estimator"] == "bvar-minn"][keys + ["T", "rmse"]]
    if base.empty:
        return df
    same_t = base.rename(columns={"rmse": "_base"})
    df = df.merge(same_t, on=keys + ["T"], how="left")
    largest = base.loc[base.groupby(keys)["T"].idxmax(), keys + ["rmse"]].rename(columns={"rmse": "_fixed"})
    df = df.merge(largest, on=keys, how="left")
    df["relative_rmse"] = df["rmse"] / df["_base"]
    df["relative_rmse_fixed"] = df["rmse"] / df["_fixed"]
    return df.drop(columns=["_base", "_fixed"])


def run_experiment(suite: SuiteSpec, threads: int = 1) -> pd.DataFrame:
    """Run every (DGP, T, seed) cell; rows come back in cell order regardless of completion order."""
    cells = [(dgp, n_obs, seed) for dgp in suite.dgps for n_obs in suite.T_values for seed in suite.seeds]
    logger.info("Benchmark suite: %s cells on %s threads", len(cells), threads)
    if threads <= 1:
        results = [run_cell(suite, *cell) for cell in cells]
    else:
        results = Parallel(n_jobs=threads, prefer="threads")(delayed(run_cell)(suite, *cell) for cell in cells)
    df = pd.DataFrame([asdict(row) for rows in results for row in rows], columns=RESULT_COLUMNS)
    df = df.drop(columns=["relative_rmse", "relative_rmse_fixed"])
    df = _add_relative(df) if not df.empty else df
    for name in ("relative_rmse", "relative_rmse_fixed"):
        if name not in df:
            df[name] = np.nan
    return df[RESULT_COLUMNS]
