"""Photon-shot-noise-limited sensitivity, dynamic range and sensor comparison.

All baselines are photon rates (photons/s). Sensitivities are in T/sqrt(Hz).
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from ltm.errors import DomainError
from ltm.schemas import (
    LorentzianFit,
    PhysicalConstants,
    PointwiseSensitivity,
    SensitivityInputs,
    SensitivityReport,
    SensorPoint,
    TradeoffAnalysis,
    TradeoffPoint,
)
from ltm.services.odmr import lorentzian_model, lorentzian_slope

logger = logging.getLogger(__name__)

EARTH_FIELD = 50e-6  # T

# eta_general / eta_approx in the limit C -> 1
_UNIT_CONTRAST_FACTOR = 3.0 * math.sqrt(3.0) / 16.0
_PREFACTOR = 4.0 / (3.0 * math.sqrt(3.0))


def _constants(constants: Optional[PhysicalConstants]) -> PhysicalConstants:
    return constants or PhysicalConstants()


def _check_contrast(contrast: float) -> None:
    if not 0.0 < contrast <= 1.0:
        raise DomainError(f"contrast must lie in (0, 1], got {contrast}")


def _check_line(fwhm: float, contrast: float, baseline: float) -> None:
    _check_contrast(contrast)
    if not fwhm > 0:
        raise DomainError(f"linewidth must be positive, got {fwhm} Hz")
    if not baseline > 0:
        raise DomainError(f"baseline photon rate must be positive, got {baseline} /s")


def psnl_pointwise(fit: LorentzianFit, nu: float, constants: Optional[PhysicalConstants] = None) -> float:
    """Shot-noise-limited sensitivity at one microwave frequency; inf where the slope vanishes."""
    signal = max(float(lorentzian_model([nu], fit)[0]), 0.0)
    slope = abs(float(lorentzian_slope([nu], fit)[0]))
    if slope == 0.0:
        return math.inf
    return _constants(constants).tesla_per_hertz * math.sqrt(signal) / slope


def shift_factor(contrast: float) -> float:
    """Position of the optimal operating point relative to the inflection point."""
    _check_contrast(contrast)
    inner = math.sqrt(max((1.0 - contrast) * (4.0 - contrast), 0.0))
    return math.sqrt(max(contrast - 1.0 + inner, 0.0))


def correction_factor(contrast: float) -> float:
    """eta_general / eta_approx: 1 for vanishing contrast, 3*sqrt(3)/16 at C = 1."""
    s = shift_factor(contrast)
    if s < 1e-6:
        return _UNIT_CONTRAST_FACTOR
    s2 = s * s
    return math.sqrt((3.0 + s2) ** 3 * (3.0 * (1.0 - contrast) + s2)) / (16.0 * s)


def psnl_approx(
    fwhm: float, contrast: float, baseline: float, constants: Optional[PhysicalConstants] = None
) -> float:
    """Weak-contrast sensitivity formula, evaluated at the inflection point with I = I0."""
    _check_line(fwhm, contrast, baseline)
    return _PREFACTOR * _constants(constants).tesla_per_hertz * fwhm / (contrast * math.sqrt(baseline))


def psnl_general(
    fwhm: float, contrast: float, baseline: float, constants: Optional[PhysicalConstants] = None
) -> float:
    """Sensitivity at the contrast-dependent optimal operating point; valid up to C = 1."""
    return psnl_approx(fwhm, contrast, baseline, constants) * correction_factor(contrast)


def inflection_signal(baseline: float, contrast: float) -> float:
    _check_contrast(contrast)
    return baseline * (1.0 - 0.75 * contrast)


def optimal_operating_point(fwhm: float, contrast: float) -> float:
    """Detuning (Hz) from the resonance center with the best sensitivity."""
    if not fwhm > 0:
        raise DomainError(f"linewidth must be positive, got {fwhm} Hz")
    return fwhm / (2.0 * math.sqrt(3.0)) * shift_factor(contrast)


def dynamic_range(fwhm: float, constants: Optional[PhysicalConstants] = None) -> float:
    """Half-range (T) of the linear response, linewidth over the gyromagnetic ratio."""
    if fwhm < 0:
        raise DomainError(f"linewidth must be non-negative, got {fwhm} Hz")
    return fwhm / _constants(constants).gyromagnetic_ratio


def _search_side(fit: LorentzianFit, center: float, sign: float, nu_opt: float, fwhm: float, constants):
    def eta(offset: float) -> float:
        return psnl_pointwise(fit, center + sign * offset, constants)

    try:
        result = minimize_scalar(eta, bracket=(0.25 * nu_opt, nu_opt, fwhm), method="golden")
    except ValueError:
        logger.debug("Golden bracket invalid on side %+d; using bounded search", sign)
        result = minimize_scalar(
            eta, bounds=(1e-9 * fwhm, fwhm), method="bounded", options={"xatol": 1e-6 * fwhm}
        )
    return float(result.fun), sign * float(result.x)


def analyze_report(
    fit: LorentzianFit,
    resonance: Optional[int] = None,
    constants: Optional[PhysicalConstants] = None,
) -> SensitivityReport:
    """Sensitivity summary for one resonance of a fit (the deepest unless an index is given)."""
    if not fit.resonances:
        raise DomainError("fit has no resonances")
    if resonance is None:
        chosen = max(fit.resonances, key=lambda r: r.contrast)
    else:
        if not 0 <= resonance < len(fit.resonances):
            raise DomainError(f"resonance index {resonance} out of range")
        chosen = fit.resonances[resonance]

    fwhm, contrast, baseline = chosen.fwhm, chosen.contrast, fit.baseline
    eta_general = psnl_general(fwhm, contrast, baseline, constants)
    eta_approx = psnl_approx(fwhm, contrast, baseline, constants)
    s_c = shift_factor(contrast)
    nu_opt = optimal_operating_point(fwhm, contrast)

    if s_c < 1e-6:
        # Pointwise expression is 0/0 at the dip of a fully contrasted line.
        eta_min, nu_min = eta_general, 0.0
    else:
        sides = [_search_side(fit, chosen.center, sign, nu_opt, fwhm, constants) for sign in (1.0, -1.0)]
        eta_min, nu_min = min(sides)

    logger.info("Sensitivity at resonance %.6g Hz: %.4g T/sqrt(Hz)", chosen.center, eta_general)
    return SensitivityReport(
        eta_pointwise_min=eta_min,
        eta_general=eta_general,
        eta_approx=eta_approx,
        nu_opt=nu_opt,
        nu_pointwise_min=nu_min,
        s_c=s_c,
        dynamic_range=dynamic_range(fwhm, constants),
        resonance_center=chosen.center,
        inputs=SensitivityInputs(fwhm=fwhm, contrast=contrast, baseline=baseline),
    )


def pointwise_sweep(
    fit: LorentzianFit, freqs: Sequence[float], constants: Optional[PhysicalConstants] = None
) -> PointwiseSensitivity:
    freqs = [float(f) for f in freqs]
    return PointwiseSensitivity(frequencies=freqs, eta=[psnl_pointwise(fit, f, constants) for f in freqs])


def _figure_of_merit(point: SensorPoint) -> float:
    if not (point.sensitivity > 0 and point.dynamic_range > 0):
        raise DomainError(f"sensor '{point.name}' needs positive sensitivity and dynamic range")
    return point.dynamic_range / point.sensitivity


def sensor_tradeoff_analysis(points: Sequence[SensorPoint], reference: SensorPoint) -> TradeoffAnalysis:
    """Place sensors against the sensitivity/dynamic-range trade-off line.

    Along the line dynamic range and sensitivity worsen by the same factor
    (slope -1 with sensitivity plotted towards better values), so its level
    c is the mean log10(DR/eta) of the unflagged points. A point's deviation
    factor is its DR/eta over 10**c.
    """
    unflagged = [p for p in points if not p.flagged]
    if not unflagged:
        raise DomainError("all sensor points are flagged; nothing to fit")
    if len(unflagged) < 2:
        raise DomainError("the trade-off fit needs at least 2 unflagged points")

    intercept = float(np.mean([math.log10(_figure_of_merit(p)) for p in unflagged]))
    level = 10.0**intercept

    def place(point: SensorPoint) -> TradeoffPoint:
        return TradeoffPoint(
            name=point.name,
            deviation_factor=_figure_of_merit(point) / level,
            in_fit=not point.flagged,
            covers_earth_field=point.dynamic_range >= EARTH_FIELD,
        )

    placed = [place(p) for p in points]
    ref = place(reference)
    ref = ref.model_copy(update={"in_fit": False})
    logger.info("Reference '%s' lies %.4g x above the trade-off line", reference.name, ref.deviation_factor)
    return TradeoffAnalysis(
        intercept=intercept,
        deviation_factors={p.name: p.deviation_factor for p in placed + [ref]},
        points=placed,
        reference=ref,
    )
