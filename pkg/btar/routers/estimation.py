import logging

import numpy as np
from fastapi import APIRouter, HTTPException, status

from btar.config import settings
from btar.schemas.api import FitRequest
from btar.schemas.config import SamplerConfig
from btar.services.gibbs import run_gibbs
from btar.utils.errors import ConfigError
from btar.utils.response import create_response, handle_exception

router = APIRouter(tags=["Estimation"])
logger = logging.getLogger(__name__)


@router.post("/fit")
def fit_model(body: FitRequest):
    try:
        series = np.asarray(body.series, dtype=float)
        if series.ndim != 4:
            raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
                                detail="series must be a [T+1][I1][I2][I3] array")
        dims = series.shape[1:]
        if int(np.prod(dims)) > settings.MAX_API_DIM:
            raise HTTPException(
                status_code=status.HTTP_413_REQUEST_ENTITY_TOO_LARGE,
                detail=f"I = {int(np.prod(dims))} exceeds the API limit of {settings.MAX_API_DIM}; use the CLI",
            )
        try:
            config = SamplerConfig(**body.model_dump(exclude={"series"}))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        draws = run_gibbs(series, config)
        logger.info("API fit dims=%s ranks=%s draws=%s", dims, config.ranks, draws.n_draws)
        return create_response(
            message="Model fitted",
            data={
                "dims": list(dims),
                "n_draws": draws.n_draws,
                "coefficients": draws.coefficient_mean(),
                "mean_log_likelihood": np.mean(draws.log_lik),
                "acceptance": draws.acceptance,
            },
            status_code=status.HTTP_200_OK,
        )
    except Exception as exc:
        return handle_exception(exc)
