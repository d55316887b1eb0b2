"""
Application configuration using pydantic-settings.
Loads from environment variables (PVSA_*) / .env file.
"""

from functools import lru_cache
from typing import Literal

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="PVSA_",
        case_sensitive=False,
    )

    # Application
    app_name: str = "pvsa"
    app_env: Literal["development", "staging", "production"] = "development"
    log_level: str = "INFO"

    # Load-flow oracle
    solver_tolerance: float = 1e-9  # pu
    solver_max_iterations: int = 100
    solver_v_floor: float = 0.3  # pu

    # Network model
    kron_neutral_floor: float = 1e-12  # ohm

    # Covariance / Monte-Carlo
    psd_tolerance: float = 1e-9  # relative to trace / 6n
    histogram_bins: int = 200
    histogram_headroom: float = 1.05
    mc_block_size: int = 8192
    default_samples: int = 100_000
    default_seed: int = 20200521
    default_jobs: int = 1
    default_threshold_pu: float = 0.05

    # Benchmarks
    bench_repetitions: int = 11
    bench_warmups: int = 2
    bench_mc_samples: int = 2000

    @field_validator(
        "solver_tolerance",
        "solver_v_floor",
        "kron_neutral_floor",
        "psd_tolerance",
        "histogram_headroom",
        mode="after",
    )
    @classmethod
    def validate_positive(cls, v: float) -> float:
        """Tolerances and floors must be strictly positive."""
        if v <= 0:
            raise ValueError("must be > 0")
        return v

    @field_validator(
        "solver_max_iterations",
        "histogram_bins",
        "mc_block_size",
        "default_jobs",
        "bench_repetitions",
        mode="after",
    )
    @classmethod
    def validate_count(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @property
    def is_production(self) -> bool:
        return self.app_env == "production"


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


settings = get_settings()
