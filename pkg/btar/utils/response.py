import logging
import math

import numpy as np
from fastapi import HTTPException, status
from fastapi.encoders import jsonable_encoder
from fastapi.responses import JSONResponse

from btar.utils.errors import BtarError

logger = logging.getLogger(__name__)

NUMPY_ENCODERS = {np.ndarray: lambda a: a.tolist(), np.generic: lambda v: v.item()}


def _finite(value):
    """Replace NaN and infinities by ``None``; JSON has no encoding for them."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, list):
        return [_finite(v) for v in value]
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    return value


def create_response(
    message: str,
    data=None,
    status_code: int = status.HTTP_200_OK,
    status_text: str | None = None
) -> JSONResponse:
    """Envelope ``{message, data, status, status_code}``; numpy arrays and scalars in ``data`` are encoded."""
    payload_status = status_text or ("success" if status_code < 400 else "error")
    encoded_data = _finite(jsonable_encoder(data, custom_encoder=NUMPY_ENCODERS))
    return JSONResponse(
        status_code=status_code,
        content={
            "message": message,
            "data": encoded_data,
            "status": payload_status,
            "status_code": status_code,
        },
    )


def handle_exception(error: Exception, fallback_message: str = "Internal server error") -> JSONResponse:
    """Coerce raised errors into the shared response structure."""
    if isinstance(error, HTTPException):
        detail = error.detail if isinstance(error.detail, str) else str(error.detail)
        return create_response(detail, None, error.status_code, status_text="error")

    if isinstance(error, BtarError):
        code = status.HTTP_422_UNPROCESSABLE_ENTITY if isinstance(error, ValueError) else status.HTTP_400_BAD_REQUEST
        logger.warning("%s: %s", type(error).__name__, error)
        return create_response(str(error), {"error": type(error).__name__}, code, status_text="error")

    logger.error(
        "Unhandled exception",
        exc_info=(type(error), error, error.__traceback__),
    )
    return create_response(fallback_message, None, status.HTTP_500_INTERNAL_SERVER_ERROR, status_text="error")
