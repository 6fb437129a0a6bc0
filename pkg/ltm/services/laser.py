"""Pump sweeps, threshold/turn-off extraction and the linear closed form."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from ltm.config import LtmSettings, get_settings
from ltm.errors import DomainError, LtmError, SweepError, ThresholdFitError
from ltm.schemas import (
    ClosedFormSolution,
    ModelParams,
    PowerCurve,
    SweptAxis,
    ThresholdFit,
    TurnOffFit,
)
from ltm.services.parameters import pump_power_to_rate
from ltm.services.steady_state import output_power, solve_photon_number

logger = logging.getLogger(__name__)


def default_grid(start: float, stop: float, n: Optional[int] = None) -> list[float]:
    n = n or get_settings().sweep_points
    if start < 0 or stop <= start:
        raise DomainError(f"pump range must satisfy 0 <= start < stop, got {start}..{stop}")
    if n < 2:
        raise DomainError("a pump grid needs at least 2 points")
    return [float(p) for p in np.linspace(start, stop, n)]


def _check_grid(grid: Sequence[float]) -> None:
    if len(grid) == 0:
        raise DomainError("pump grid is empty")
    values = np.asarray(grid, dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise DomainError("pump grid values must be finite and non-negative")
    if np.any(np.diff(values) <= 0):
        raise DomainError("pump grid must be strictly ascending")


def at_pump(params: ModelParams, axis: SweptAxis, power: float) -> ModelParams:
    """Copy of params with the MECSEL or NV pump rate set from a pump power."""
    if axis is SweptAxis.MECSEL_PUMP:
        rate = pump_power_to_rate(power, params.mecsel.pump_rate_per_watt)
        return params.model_copy(update={"mecsel": params.mecsel.model_copy(update={"Lambda_ge": rate})})
    rate = pump_power_to_rate(power, params.nv.pump_rate_per_watt)
    return params.model_copy(update={"nv": params.nv.model_copy(update={"Lambda_NV": rate})})


def _sweep(
    params: ModelParams,
    grid: Sequence[float],
    axis: SweptAxis,
    label: str,
    settings: Optional[LtmSettings],
    check_monotone: bool,
) -> PowerCurve:
    _check_grid(grid)
    settings = settings or get_settings()

    def evaluate(power: float) -> float:
        try:
            point = at_pump(params, axis, power)
            solution = solve_photon_number(point, settings=settings, check_monotone=check_monotone)
            return output_power(solution.n_photons, point)
        except LtmError as e:
            raise SweepError(power, e) from e

    logger.info("Sweeping %s over %d points (%.4g..%.4g W)", axis.value, len(grid), grid[0], grid[-1])
    if settings.sweep_workers > 1:
        with ThreadPoolExecutor(max_workers=settings.sweep_workers) as executor:
            outputs = list(executor.map(evaluate, grid))
    else:
        outputs = [evaluate(p) for p in grid]

    return PowerCurve(
        swept_axis=axis,
        points=[(float(p), float(o)) for p, o in zip(grid, outputs)],
        fixed_params=params,
        label=label,
    )


def sweep_mecsel_pump(
    params: ModelParams,
    grid: Sequence[float],
    label: str = "",
    settings: Optional[LtmSettings] = None,
    check_monotone: bool = True,
) -> PowerCurve:
    return _sweep(params, grid, SweptAxis.MECSEL_PUMP, label, settings, check_monotone)


def sweep_nv_pump(
    params: ModelParams,
    grid: Sequence[float],
    label: str = "",
    settings: Optional[LtmSettings] = None,
    check_monotone: bool = True,
) -> PowerCurve:
    """Output power against NV pump power; the MECSEL pump stays as given in params."""
    return _sweep(params, grid, SweptAxis.NV_PUMP, label, settings, check_monotone)


def _line_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), float(intercept), rms


def _lasing_points(curve: PowerCurve, output_floor: Optional[float]) -> tuple[np.ndarray, np.ndarray]:
    floor = get_settings().output_floor if output_floor is None else output_floor
    pumps, outputs = curve.pumps, curve.outputs
    mask = outputs > floor
    return pumps[mask], outputs[mask]


def extract_threshold(
    curve: PowerCurve, n_points: Optional[int] = None, output_floor: Optional[float] = None
) -> ThresholdFit:
    """Line through the first n lasing points; threshold is its pump-axis intercept."""
    n_points = n_points or get_settings().threshold_points
    if n_points < 2:
        raise DomainError("a threshold fit needs at least 2 points")
    pumps, outputs = _lasing_points(curve, output_floor)
    if len(pumps) < n_points:
        raise ThresholdFitError(f"only {len(pumps)} lasing points, {n_points} required")

    x, y = pumps[:n_points], outputs[:n_points]
    slope, intercept, rms = _line_fit(x, y)
    if slope <= 0:
        raise ThresholdFitError(f"fitted slope efficiency is not positive ({slope:.4g} W/W)")
    threshold = -intercept / slope
    if threshold < 0:
        raise ThresholdFitError(f"fitted threshold is negative ({threshold:.4g} W)")
    if slope > 1:
        raise ThresholdFitError(f"fitted slope efficiency exceeds unity ({slope:.4g} W/W)")
    return ThresholdFit(threshold=threshold, slope_efficiency=slope, n_points_used=n_points, fit_rms=rms)


def extract_turn_off(
    curve: PowerCurve, n_points: Optional[int] = None, output_floor: Optional[float] = None
) -> TurnOffFit:
    """Line through the last n lasing points of a falling curve; turn-off is its intercept."""
    n_points = n_points or get_settings().threshold_points
    if n_points < 2:
        raise DomainError("a turn-off fit needs at least 2 points")
    pumps, outputs = _lasing_points(curve, output_floor)
    if len(pumps) < n_points:
        raise ThresholdFitError(f"only {len(pumps)} lasing points, {n_points} required")

    x, y = pumps[-n_points:], outputs[-n_points:]
    slope, intercept, rms = _line_fit(x, y)
    if slope >= 0:
        raise ThresholdFitError(f"output does not fall with pump (slope {slope:.4g} W/W)")
    return TurnOffFit(turn_off=-intercept / slope, slope=slope, n_points_used=n_points, fit_rms=rms)


def closed_form_photon_number(params: ModelParams, lambda_ge: float) -> ClosedFormSolution:
    """Linear photon number of an unabsorbed cavity, N = max(0, a*Lambda_ge - b*L_eg).

    Only meaningful when the NV ensemble is unpumped.
    """
    if lambda_ge < 0:
        raise DomainError(f"pump rate must be non-negative, got {lambda_ge} Hz")
    m, kappa = params.mecsel, params.cavity.kappa
    if m.G_eg <= kappa:
        return ClosedFormSolution(n_photons=0.0, lasing_possible=False)
    a = (m.G_eg - kappa) * m.N_2M / (2.0 * kappa * m.G_eg)
    b = (m.G_eg + kappa) * m.N_2M / (2.0 * kappa * m.G_eg)
    return ClosedFormSolution(n_photons=max(0.0, a * lambda_ge - b * m.L_eg), lasing_possible=True)


def closed_form_threshold(params: ModelParams) -> float:
    """Threshold pump rate (Hz) of the unabsorbed cavity."""
    m, kappa = params.mecsel, params.cavity.kappa
    if m.G_eg <= kappa:
        raise DomainError(f"no lasing possible: G_eg ({m.G_eg:.4g} Hz) <= kappa ({kappa:.4g} Hz)")
    return m.L_eg * (m.G_eg + kappa) / (m.G_eg - kappa)
