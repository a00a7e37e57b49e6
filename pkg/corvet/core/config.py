from pydantic_settings import BaseSettings, SettingsConfigDict
import os

class Settings(BaseSettings):
    # App
    APP_NAME: str = "CORVET vector engine model"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False

    # Execution
    THREADS: int = 1
    DEFAULT_SEED: int = 0

    # Arithmetic
    GUARD_BITS: int = 4

    # Runner
    SENSITIVITY_THRESHOLD: float = 0.5

    # File paths
    LOG_DIR: str = "logs"
    LOG_TO_FILE: bool = False
    OUTPUT_DIR: str = "results"

    model_config = SettingsConfigDict(env_prefix="CORVET_", env_file=".env", extra="ignore")

settings = Settings()

# Ensure directories exist
if settings.LOG_TO_FILE:
    os.makedirs(settings.LOG_DIR, exist_ok=True)
