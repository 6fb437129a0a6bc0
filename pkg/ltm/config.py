import logging
from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache


class LtmSettings(BaseSettings):
    log_level: str = "WARNING"

    # Outputs at or below this power count as "not lasing" (W)
    output_floor: float = 1e-9

    sweep_points: int = 101
    threshold_points: int = 10
    sweep_workers: int = 1

    # Photon-number root finding
    root_n_max: float = 1e16
    root_xtol: float = 1e-6
    root_rtol: float = 1e-14
    monotonicity_samples: int = 8

    # Multi-Lorentzian fits
    fit_max_iterations: int = 500
    fit_xtol: float = 1e-10
    fit_ftol: float = 1e-12
    fit_diff_step: float = 1e-7

    # Staged calibration
    calibration_rtol: float = 1e-6
    calibration_g_s_max: float = 5e9
    calibration_omega_max: float = 2e7
    calibration_zero_fraction: float = 1e-3

    wavelength: float = 1042e-9

    model_config = SettingsConfigDict(env_prefix="LTM_", env_file=".env", extra="ignore")

    @property
    def numeric_log_level(self) -> int:
        """Resolve the configured level name, falling back to WARNING."""
        return getattr(logging, self.log_level.upper(), logging.WARNING)


@lru_cache
def get_settings() -> LtmSettings:
    return LtmSettings()
