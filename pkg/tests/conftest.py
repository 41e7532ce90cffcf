import os
import sys
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

# Ensure predictable environment variables for tests before importing the app.
BASE_DIR = Path(__file__).resolve().parents[1]

if str(BASE_DIR) not in sys.path:
    sys.path.insert(0, str(BASE_DIR))

os.environ.setdefault("BTAR_LOG_LEVEL", "WARNING")
os.environ.setdefault("BTAR_MAX_API_DIM", "8")
os.environ.setdefault("BTAR_THREADS", "1")

import btar.main as main  # noqa: E402  (import after env vars are set)
from btar.services.decomposition import TuckerFactors  # noqa: E402
from btar.services.tar_model import (  # noqa: E402
    ErrorCov,
    InterceptTrend,
    ModelState,
    VolatilityState,
)


@pytest.fixture()
def client():
    with TestClient(main.app) as test_client:
        yield test_client


@pytest.fixture()
def rng():
    return np.random.default_rng(20240601)


def random_spd(rng, dim: int) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    return a @ a.T + dim * np.eye(dim)


def random_state(rng, dims=(2, 2, 2), ranks=(1, 2, 1, 2, 1, 2), *, regime="homoskedastic",
                 n_obs: int = 6, trend: bool = False, scale: float = 0.3) -> ModelState:
    """Small random model state with non-trivial covariance and volatility."""
    dims = tuple(dims)
    six = dims + dims
    factors = TuckerFactors(
        core=rng.standard_normal(tuple(ranks)),
        factors=tuple(rng.standard_normal((i, r)) * scale for i, r in zip(six, ranks)),
    )
    vol = VolatilityState.initial(regime, n_obs)
    if regime == "csv":
        vol.h = rng.normal(0.0, 0.3, size=n_obs)
    elif regime == "outlier":
        vol.o = np.where(rng.random(n_obs) < 0.3, 4.1, 1.0)
    vol.sync_omega()
    return ModelState(
        factors=factors,
        intercept=InterceptTrend(
            a0=rng.standard_normal(dims) * 0.1,
            a1=rng.standard_normal(dims) * 0.01 if trend else None,
        ),
        cov=ErrorCov(*(random_spd(rng, d) / d for d in dims)),
        vol=vol,
    )


def random_series(rng, dims=(2, 2, 2), n_obs: int = 6) -> np.ndarray:
    return rng.standard_normal((n_obs + 1,) + tuple(dims))
