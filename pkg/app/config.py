"""Runtime solver configuration."""
import os
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field


def _available_parallelism() -> int:
    if hasattr(os, "process_cpu_count"):
        return os.process_cpu_count() or 1
    return os.cpu_count() or 1


class SolverSettings(BaseSettings):
    """Linear solver and oracle settings."""

    cg_tol: float = Field(default=1e-12, gt=0, lt=1)
    cg_max_iter_factor: int = Field(default=10, ge=1)
    threads: int = Field(default_factory=_available_parallelism, ge=1)
    oracle_max_boundary_nodes: int = Field(default=512, ge=1)
    delta_margin: float = Field(default=0.95, gt=0, le=1)
    log_level: str = Field(default="INFO")

    model_config = SettingsConfigDict(
        env_prefix="STEKLOV_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore"
    )


class OutputSettings(BaseSettings):
    """Where artifacts are written."""

    directory: str = Field(default="results")

    model_config = SettingsConfigDict(
        env_prefix="STEKLOV_OUTPUT_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore"
    )


class Settings:
    """Application settings."""

    def __init__(self):
        self.solver = SolverSettings()
        self.output = OutputSettings()


def get_settings() -> Settings:
    """Get application settings."""
    return Settings()
