"""Application configuration settings."""

import math

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    """Numerical defaults and tolerances, overridable via NMPZERO_* variables."""

    model_config = SettingsConfigDict(
        env_prefix="NMPZERO_", env_file=".env", case_sensitive=False, extra="ignore"
    )

    # Logging
    log_level: str = "INFO"

    # Network
    omega0_rad_s: float = 2.0 * math.pi * 50.0
    psd_tol: float = 1e-8

    # Zero location
    marginal_sigma_tol: float = 1e-9
    oracle_points: int = 2048
    oracle_min_rad_s: float = 1.0
    oracle_max_factor: float = 10.0
    bisect_rel_tol: float = 1e-9
    svd_dip_tol: float = 1e-6
    direction_residual_tol: float = 1e-6

    # Rational algebra
    pole_tol: float = 1e-12
    cancellation_tol: float = 1e-6
    max_symbolic_dim: int = 8

    # Frequency analysis
    sweep_points: int = 4096
    fd_step: float = 1e-4

    # Reporting / verification
    tol_rel: float = 1e-6
    float_digits: int = 17


settings = Settings()
