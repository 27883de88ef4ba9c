"""
DRMPC - Configuration Management
Centralized process settings using pydantic-settings.
"""

from functools import lru_cache
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

from src.core.constants import SOLVER_MAX_ITER, SOLVER_STATIC_REG, SOLVER_TOL


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables (prefix DRMPC_)."""

    model_config = SettingsConfigDict(
        env_prefix="DRMPC_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    log_level: str = "INFO"

    # Parallel closed-loop runs (DRMPC_THREADS); None means one per CPU
    threads: Optional[int] = None

    # Interior-point defaults
    solver_tol: float = SOLVER_TOL
    solver_max_iter: int = SOLVER_MAX_ITER
    solver_reg: float = SOLVER_STATIC_REG

    # Artifacts
    output_dir: str = "results"


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


# Global settings instance
settings = get_settings()
