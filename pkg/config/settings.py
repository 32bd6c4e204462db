import os
from typing import Any
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


def _coerce_bool(v: Any) -> bool:
    """Coerce env values like 'WARN', '1', 'true' to bool so Settings always loads."""
    if isinstance(v, bool):
        return v
    if v is None:
        return False
    s = str(v).strip().upper()
    if s in ("1", "TRUE", "YES", "ON"):
        return True
    return False


class Settings(BaseSettings):
    """Global configuration settings for StochGram."""

    # Project Info
    PROJECT_NAME: str = "StochGram"
    VERSION: str = "0.3.0"
    DEBUG: bool = Field(default=False, description="Enable debug mode")
    LOG_LEVEL: str = Field(default="INFO", description="Root logging level for the CLI")

    @field_validator("DEBUG", mode="before")
    @classmethod
    def coerce_debug(cls, v: Any) -> bool:
        return _coerce_bool(v)

    # Paths
    BASE_DIR: str = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    RESULTS_DIR: str = os.path.join(BASE_DIR, "results")

    # UAV experiment
    UAV_DT: float = 0.01
    UAV_SPEED: float = 10.0
    UAV_HORIZON: float = 150.0
    UAV_EPSILON: float = 0.1

    # Flapping-wing schedule
    WING_DT: float = 5e-4
    WING_DURATION: float = 0.2
    WING_PERTURB_TIME: float = 0.16
    WING_EPSILON: float = 0.01

    # Numerical tolerances
    RANK_TOL: float = 1e-8          # relative to sigma_max; also the metric singularity cut

    # Placement
    EXHAUSTIVE_BUDGET: int = 1_000_000
    PENALTY_SIGMA: float = 1e5
    PSO_SWARM_SIZE: int = 40
    PSO_ITERATIONS: int = 150
    PSO_INERTIA: float = 0.729
    PSO_COGNITIVE: float = 1.49445
    PSO_SOCIAL: float = 1.49445
    PSO_VELOCITY_CLAMP: float = 0.2  # fraction of each coordinate range

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore"
    )


def get_settings() -> Settings:
    return Settings()


settings = get_settings()
