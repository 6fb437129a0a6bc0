from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict


class Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# --- model parameters (SI units throughout) ---


class PhysicalConstants(Frozen):
    planck_h: float = 6.62607015e-34
    electron_g: float = 2.00231930436
    bohr_magneton: float = 9.2740100783e-24
    speed_of_light: float = 299792458.0

    @property
    def gyromagnetic_ratio(self) -> float:
        """Electron gyromagnetic ratio in Hz/T."""
        return self.electron_g * self.bohr_magneton / self.planck_h

    @property
    def tesla_per_hertz(self) -> float:
        return self.planck_h / (self.electron_g * self.bohr_magneton)


class NVParams(Frozen):
    L21: float = 66.16e6
    L43: float = 66.16e6
    L25: float = 11.1e6
    L45: float = 91.8e6
    L56: float = 10e9
    L61: float = 4.87e6
    L63: float = 2.04e6
    Gamma13: float = 5e6
    Lambda_NV: float = 0.52e6
    Omega: float = 0.83e6
    Delta: float = 0.87e9
    G_S: float = 463e6
    N_NV: float = 3.2e12
    pump_rate_per_watt: float = 0.104e6


class MecselParams(Frozen):
    L_eg: float = 1.26e6
    G_eg: float = 188.3e6
    Lambda_ge: float = 0.0
    N_2M: float = 3.2e12
    pump_rate_per_watt: float = 10.4e6


class CavityParams(Frozen):
    kappa: float = 154e6
    kappa_mirror: float = 75e6
    wavelength: float = 1042e-9


class ModelParams(Frozen):
    nv: NVParams = NVParams()
    mecsel: MecselParams = MecselParams()
    cavity: CavityParams = CavityParams()
    constants: PhysicalConstants = PhysicalConstants()


# --- steady state ---


class NVState(Frozen):
    rho11: float
    rho22: float
    rho33: float
    rho44: float
    rho55: float
    rho66: float
    rho13_re: float
    rho13_im: float

    @property
    def populations(self) -> np.ndarray:
        return np.array([self.rho11, self.rho22, self.rho33, self.rho44, self.rho55, self.rho66])

    @property
    def rho13(self) -> complex:
        return complex(self.rho13_re, self.rho13_im)


class MecselState(Frozen):
    rho_gg: float
    rho_ee: float

    @property
    def inversion(self) -> float:
        return self.rho_ee - self.rho_gg


class Family(Frozen):
    weight: float
    delta: float


class PhotonSolution(Frozen):
    n_photons: float
    lasing: bool
    # None when the NV ensemble is unpumped and undriven (ground-state split undetermined)
    nv: Optional[NVState] = None
    mecsel: MecselState
    stability_derivative: float
    gain_at_zero: float
    family_states: list[Optional[NVState]] = []


# --- laser characterization ---


class SweptAxis(str, Enum):
    MECSEL_PUMP = "mecsel_pump"
    NV_PUMP = "nv_pump"


class PowerCurve(Frozen):
    swept_axis: SweptAxis
    points: list[tuple[float, float]]
    fixed_params: Optional[ModelParams] = None
    label: str = ""

    @property
    def pumps(self) -> np.ndarray:
        return np.array([p for p, _ in self.points], dtype=float)

    @property
    def outputs(self) -> np.ndarray:
        return np.array([o for _, o in self.points], dtype=float)


class ThresholdFit(Frozen):
    threshold: float
    slope_efficiency: float
    n_points_used: int
    fit_rms: float


class TurnOffFit(Frozen):
    turn_off: float
    slope: float
    n_points_used: int
    fit_rms: float


class ClosedFormSolution(Frozen):
    n_photons: float
    # False when G_eg <= kappa: the gain medium can never overcome the loss
    lasing_possible: bool


class ThresholdShift(Frozen):
    swept_axis: SweptAxis
    off_resonant: float
    resonant: float


# --- ODMR ---


class OdmrResonance(Frozen):
    center: float
    weight: float = 1.0


class OdmrSpectrum(Frozen):
    points: list[tuple[float, float]]
    params_snapshot: Optional[ModelParams] = None
    label: str = ""

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([f for f, _ in self.points], dtype=float)

    @property
    def outputs(self) -> np.ndarray:
        return np.array([o for _, o in self.points], dtype=float)


class PeakGuess(Frozen):
    center: float
    fwhm: float
    contrast: float
    # Depth below the surrounding spectrum, as a fraction of the baseline
    prominence: float = 0.0


class LorentzianResonance(Frozen):
    center: float
    fwhm: float
    contrast: float


class LorentzianFit(Frozen):
    baseline: float
    resonances: list[LorentzianResonance]
    residual_rms: float
    covariance: list[list[float]]
    parameter_names: list[str]
    bounds: dict[str, tuple[float, float]] = {}
    flags: list[str] = []
    iterations: int = 0


class ContrastRow(Frozen):
    center: float
    contrast: float
    fwhm: float


# --- sensitivity ---


class SensitivityInputs(Frozen):
    fwhm: float
    contrast: float
    baseline: float


class SensitivityReport(Frozen):
    eta_pointwise_min: float
    eta_general: float
    eta_approx: float
    nu_opt: float
    nu_pointwise_min: float
    s_c: float
    dynamic_range: float
    resonance_center: float
    inputs: SensitivityInputs


class PointwiseSensitivity(Frozen):
    frequencies: list[float]
    eta: list[float]


class SensorPoint(Frozen):
    name: str
    sensitivity: float
    dynamic_range: float
    flux_concentrator: bool = False
    closed_loop: bool = False

    @property
    def flagged(self) -> bool:
        return self.flux_concentrator or self.closed_loop


class TradeoffPoint(Frozen):
    name: str
    deviation_factor: float
    in_fit: bool
    covers_earth_field: bool


class TradeoffAnalysis(Frozen):
    intercept: float
    slope: float = -1.0
    deviation_factors: dict[str, float]
    points: list[TradeoffPoint]
    reference: TradeoffPoint


# --- calibration ---


class CalibrationStage(str, Enum):
    MECSEL = "mecsel"
    SINGLET = "singlet"
    RABI = "rabi"


class FittedValue(Frozen):
    value: float
    std_error: Optional[float] = None


class CalibrationResult(Frozen):
    fitted: dict[str, FittedValue]
    sse: float
    iterations: int
    stage: CalibrationStage
    method: str
    n_points: int
    loss: str = "unweighted SSE over points where model or data lases"
    flags: list[str] = []
    dataset_hash: str = ""
