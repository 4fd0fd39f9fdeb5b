"""
Application configuration management.

This module handles all toolkit configuration using Pydantic settings
with environment variable support and validation. Every field can be
overridden with a ``BGAMP_``-prefixed environment variable or a ``.env`` file.
"""

from functools import lru_cache
from typing import Literal, Optional

from pydantic import Field, computed_field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

BOLTZMANN_J_PER_K = 1.380649e-23
ELEMENTARY_CHARGE_C = 1.602176634e-19
MODEL_TEMPERATURE_K = 300.0


class Settings(BaseSettings):
    """
    Toolkit settings with environment variable support.

    All settings can be overridden using environment variables, e.g.
    ``BGAMP_SEED=42`` or ``BGAMP_LOG_LEVEL=DEBUG``.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="BGAMP_",
        case_sensitive=True,
        extra="ignore",
    )

    # Application
    APP_NAME: str = Field(default="bgamp", description="Application name")
    APP_VERSION: str = Field(default="0.1.0", description="Application version")
    DEBUG: bool = Field(default=False, description="Enable debug mode")

    # Logging
    LOG_LEVEL: Literal["TRACE", "DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="WARNING", description="Logging level"
    )
    LOG_JSON: bool = Field(default=False, description="Serialize console logs as JSON")
    LOG_DIR: Optional[str] = Field(
        default=None, description="Directory for rotating log files (disabled when unset)"
    )

    # Reproducibility
    SEED: int = Field(
        default=0, ge=0, lt=2**64, description="Fallback Monte Carlo seed when --seed is absent"
    )

    # Physics
    TEMPERATURE_K: float = Field(
        default=300.0, gt=0.0, description="Noise temperature in kelvin"
    )
    VDD_V: float = Field(default=1.8, gt=0.0, description="Supply voltage of the amplifier templates")

    # DC solver
    NEWTON_MAX_ITERATIONS: int = Field(
        default=200, ge=1, description="Newton iterations per source step"
    )
    SOURCE_STEPS: int = Field(
        default=20, ge=1, description="Source-stepping ramp steps on Newton failure"
    )
    NEWTON_MAX_STEP_V: float = Field(
        default=0.1, description="Largest node-voltage update per Newton iteration"
    )
    KCL_ABSTOL_A: float = Field(default=1e-12, description="KCL residual tolerance in amperes")
    VNTOL_V: float = Field(default=1e-9, description="Node-voltage update tolerance in volts")

    # Fitting
    FIT_AMPLITUDE_V: float = Field(default=1e-3, description="Half-width of the fit window")
    FIT_POINTS: int = Field(default=201, ge=50, description="Samples in a fit window")
    FIT_ORDER: int = Field(default=5, ge=3, le=5, description="Polynomial fit order")

    # Small-signal
    CM_TEST_AMPLITUDE_V: float = Field(
        default=1e-3, description="Common-mode test amplitude on both gates"
    )
    BIAS_MATCH_WINDOW_V: float = Field(
        default=0.5, description="Largest threshold offset bias matching may apply"
    )

    # Monte Carlo
    MC_SAMPLES: int = Field(default=100, ge=2, description="Monte Carlo samples per length")
    MC_AVT_V_UM: float = Field(
        default=1e-3, description="Threshold mismatch coefficient in V*um"
    )
    MC_SIGMA_KPRIME_REL: float = Field(
        default=0.002, ge=0.0, description="Relative kprime standard deviation"
    )
    MC_MAX_FAILURE_FRACTION: float = Field(
        default=0.05, description="Largest fraction of failed samples for a valid run"
    )

    @field_validator(
        "NEWTON_MAX_STEP_V",
        "KCL_ABSTOL_A",
        "VNTOL_V",
        "FIT_AMPLITUDE_V",
        "CM_TEST_AMPLITUDE_V",
        "BIAS_MATCH_WINDOW_V",
        "MC_AVT_V_UM",
    )
    @classmethod
    def validate_positive(cls, v: float) -> float:
        """Tolerances and amplitudes must be strictly positive."""
        if not v > 0.0:
            raise ValueError("must be strictly positive")
        return v

    @field_validator("MC_MAX_FAILURE_FRACTION")
    @classmethod
    def validate_fraction(cls, v: float) -> float:
        """Validate the failure fraction lies in [0, 1]."""
        if not 0.0 <= v <= 1.0:
            raise ValueError("MC_MAX_FAILURE_FRACTION must lie in [0, 1]")
        return v

    @computed_field  # type: ignore[prop-decorator]
    @property
    def thermal_voltage_v(self) -> float:
        """Thermal voltage U_T used by the compact model (fixed at 300 K)."""
        return thermal_voltage()


def thermal_voltage(temperature_k: float = MODEL_TEMPERATURE_K) -> float:
    """Return kT/q in volts."""
    return BOLTZMANN_J_PER_K * temperature_k / ELEMENTARY_CHARGE_C


@lru_cache
def get_settings() -> Settings:
    """
    Get cached toolkit settings.

    This function uses LRU cache to ensure settings are loaded only once
    and reused throughout the process lifetime. Tests that change
    ``BGAMP_*`` variables call ``get_settings.cache_clear()``.

    Returns:
        Settings: Toolkit settings instance
    """
    return Settings()
