import os
from pathlib import Path

from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent.parent  # -> repository root

# Load .env explicitly from project root
load_dotenv(BASE_DIR / ".env")


class Settings:
    PROJECT_NAME = "BTAR Toolkit"
    VERSION = "1.0.0"

    LOG_LEVEL = os.getenv("BTAR_LOG_LEVEL", "INFO").upper()
    THREADS = int(os.getenv("BTAR_THREADS", 1))
    OUTPUT_DIR = Path(os.getenv("BTAR_OUTPUT_DIR", "out"))
    DEFAULT_SEED = int(os.getenv("BTAR_DEFAULT_SEED", 0))
    MAX_API_DIM = int(os.getenv("BTAR_MAX_API_DIM", 64))

    cors_origins = [
        origin.strip()
        for origin in os.getenv("CORS_ORIGINS", "*").split(",")
        if origin.strip()
    ]


settings = Settings()
