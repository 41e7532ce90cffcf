import logging

from fastapi import APIRouter, status

from btar.schemas.bench import DgpSpec
from btar.services.dgp import generate
from btar.utils.response import create_response, handle_exception

router = APIRouter(tags=["Simulation"])
logger = logging.getLogger(__name__)


@router.post("/simulate")
def simulate_series(body: DgpSpec):
    try:
        draw = generate(body)
        logger.info("Simulated %s DGP dims=%s T=%s seed=%s", body.kind, body.dims, body.T, body.seed)
        return create_response(
            message="Series simulated",
            data={
                "dims": list(body.dims),
                "T": body.T,
                "series": draw.series,
                "coefficients": draw.b_hat,
                "spectral_radius": draw.radius,
            },
            status_code=status.HTTP_200_OK,
        )
    except Exception as exc:
        return handle_exception(exc)
