"""
Configuration management for netcourse.

Centralized configuration handling with environment variable support,
type validation, and defaults for the estimation, simulation and CLI layers.
"""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Main configuration class for netcourse."""

    model_config = SettingsConfigDict(
        env_prefix="NETCOURSE_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    # Logging Configuration
    log_level: str = Field(default="INFO", description="Logging level")
    log_dir: str = Field(default="logs", description="Directory for rotating log files")
    log_to_file: bool = Field(default=False, description="Also write logs to log_dir")

    # Estimation Configuration
    epsilon: float = Field(default=0.01, gt=0, description="Convergence threshold on max relative parameter change")
    max_cycles: int = Field(default=50, gt=0, description="Maximum ICM cycles per fit")
    ttest_alpha: float = Field(default=0.05, gt=0, lt=1, description="Significance level of the t-test initialization")

    # Solver Configuration
    coefficient_clamp: float = Field(default=30.0, gt=0, description="Absolute bound on logistic coefficients")
    irls_tol: float = Field(default=1e-8, gt=0, description="IRLS tolerance on coefficient change")
    irls_max_iter: int = Field(default=100, gt=0, description="IRLS iteration cap")
    simplex_tol: float = Field(default=1e-6, gt=0, description="Nelder-Mead simplex diameter tolerance (log space)")
    theta_restarts: int = Field(default=2, ge=0, description="Random restarts of the Gamma-Gamma fit")

    # Simulation Configuration
    gibbs_sweeps: int = Field(default=5, ge=0, description="Sequential Gibbs sweeps per simulated column")

    # Runtime Configuration
    default_jobs: int = Field(default=1, gt=0, description="Worker processes for replicate fan-out")
    output_precision: int = Field(default=6, gt=0, description="Significant digits in TSV outputs")


# Global settings instance
settings = Settings()
