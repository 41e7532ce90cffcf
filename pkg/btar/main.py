from fastapi import FastAPI, status
from fastapi.middleware.cors import CORSMiddleware

from btar.config import settings
from btar.routers import estimation, simulation
from btar.utils.response import create_response, handle_exception

app = FastAPI(title=settings.PROJECT_NAME, version=settings.VERSION)

# CORS for SPA / API access
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Add routes
app.include_router(simulation.router)
app.include_router(estimation.router)


@app.get("/")
def home():
    try:
        return create_response(
            message="BTAR API running",
            data={"service": "btar"},
            status_code=status.HTTP_200_OK
        )
    except Exception as exc:
        return handle_exception(exc)


@app.get("/api-info")
def api_info():
    try:
        return create_response(
            message="API information",
            data={
                "service": settings.PROJECT_NAME,
                "version": settings.VERSION,
                "docs_url": "/docs",
                "openapi_url": "/openapi.json",
            },
            status_code=status.HTTP_200_OK,
        )
    except Exception as exc:
        return handle_exception(exc)
