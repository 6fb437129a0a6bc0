"""Staged calibration of the model against measured power curves.

Stages run in order, each freezing what the previous one found:
MECSEL (L_eg, G_eg) from the NV-unpumped curve, then the singlet coupling
G_S from the off-resonant curve, then the Rabi frequency from the resonant
curve. The loss is the unweighted SSE over points where model or data lases.
"""

import logging
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from ltm.config import LtmSettings, get_settings
from ltm.errors import CalibrationError, DomainError, LtmError
from ltm.schemas import (
    CalibrationResult,
    CalibrationStage,
    FittedValue,
    ModelParams,
    PowerCurve,
    SweptAxis,
    ThresholdShift,
)
from ltm.services.laser import (
    default_grid,
    extract_threshold,
    extract_turn_off,
    sweep_mecsel_pump,
    sweep_nv_pump,
)
from ltm.services.parameters import photon_energy, with_overrides
from ltm.utils import points_hash

logger = logging.getLogger(__name__)

MIN_LASING_POINTS = 5
SCAN_POINTS = 21


def _floor(settings: LtmSettings) -> float:
    return settings.output_floor


def _model_outputs(params: ModelParams, curve: PowerCurve, settings: LtmSettings) -> np.ndarray:
    sweep = sweep_mecsel_pump if curve.swept_axis is SweptAxis.MECSEL_PUMP else sweep_nv_pump
    return sweep(params, list(curve.pumps), settings=settings, check_monotone=False).outputs


def _residuals(model: np.ndarray, data: np.ndarray, floor: float) -> np.ndarray:
    mask = (data > floor) | (model > floor)
    return (model - data)[mask]


def _objective(
    params_for: Callable[[np.ndarray], Optional[ModelParams]], curve: PowerCurve, settings: LtmSettings
) -> Callable[[np.ndarray], float]:
    data = curve.outputs
    floor = _floor(settings)

    def sse(x: np.ndarray) -> float:
        params = params_for(np.atleast_1d(x))
        if params is None:
            return np.inf
        try:
            model = _model_outputs(params, curve, settings)
        except LtmError as e:
            logger.debug("Objective undefined at %s: %s", x, e)
            return np.inf
        return float(np.sum(_residuals(model, data, floor) ** 2))

    return sse


def _require_lasing(curve: PowerCurve, settings: LtmSettings, axis: SweptAxis) -> None:
    if curve.swept_axis is not axis:
        raise CalibrationError(f"expected a {axis.value} sweep, got {curve.swept_axis.value}")
    lasing = int(np.sum(curve.outputs > _floor(settings)))
    if lasing < MIN_LASING_POINTS:
        raise CalibrationError(f"curve has {lasing} lasing points, at least {MIN_LASING_POINTS} needed")


def _n_used(params: ModelParams, curve: PowerCurve, settings: LtmSettings) -> int:
    model = _model_outputs(params, curve, settings)
    return int(np.sum((curve.outputs > _floor(settings)) | (model > _floor(settings))))


def _curvature_errors(sse: Callable[[np.ndarray], float], x: np.ndarray, steps: np.ndarray, sse_min: float, n: int):
    """Standard errors from a finite-difference Hessian of the SSE: var = 2 s^2 H^-1."""
    p = len(x)
    if n <= p:
        return [None] * p
    sigma_sq = sse_min / (n - p)
    hessian = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            ei, ej = np.eye(p)[i] * steps[i], np.eye(p)[j] * steps[j]
            if i == j:
                value = (sse(x + ei) - 2.0 * sse_min + sse(x - ei)) / steps[i] ** 2
            else:
                value = (sse(x + ei + ej) - sse(x + ei - ej) - sse(x - ei + ej) + sse(x - ei - ej)) / (
                    4.0 * steps[i] * steps[j]
                )
            hessian[i, j] = hessian[j, i] = value
    if not np.all(np.isfinite(hessian)):
        return [None] * p
    try:
        covariance = 2.0 * sigma_sq * np.linalg.inv(hessian)
    except np.linalg.LinAlgError:
        return [None] * p
    variances = np.diag(covariance)
    if np.any(variances < 0):
        logger.warning("Objective curvature is not positive definite; standard errors omitted")
        return [None] * p
    return [float(v) for v in np.sqrt(variances)]


def _gray(params: ModelParams) -> ModelParams:
    return with_overrides(params, {"nv.Lambda_NV": 0.0})


def _map_line(slope: float, intercept: float, params: ModelParams) -> tuple[float, float]:
    """Map a fitted line out = slope*pump + intercept onto (L_eg, G_eg)."""
    m, cavity = params.mecsel, params.cavity
    kappa = cavity.kappa
    energy = photon_energy(cavity.wavelength, params.constants)
    q = 2.0 * kappa * slope / (energy * cavity.kappa_mirror * m.N_2M * m.pump_rate_per_watt)
    if not 0.0 < q < 1.0:
        raise CalibrationError(f"slope {slope:.4g} W/W is not reachable by any G_eg > kappa")
    g_eg = kappa / (1.0 - q)
    threshold_rate = m.pump_rate_per_watt * (-intercept / slope)
    l_eg = threshold_rate * (g_eg - kappa) / (g_eg + kappa)
    return l_eg, g_eg


def fit_mecsel_linear(
    curve: PowerCurve, params: ModelParams, settings: Optional[LtmSettings] = None
) -> CalibrationResult:
    """Closed-form MECSEL calibration from a straight line through the lasing points."""
    settings = settings or get_settings()
    _require_lasing(curve, settings, SweptAxis.MECSEL_PUMP)
    mask = curve.outputs > _floor(settings)
    x, y = curve.pumps[mask], curve.outputs[mask]
    (slope, intercept), cov = np.polyfit(x, y, 1, cov=True)
    if slope <= 0:
        raise CalibrationError("output does not rise with pump power")
    l_eg, g_eg = _map_line(slope, intercept, params)

    jac = np.empty((2, 2))
    for k, (ds, di) in enumerate(((abs(slope) * 1e-6, 0.0), (0.0, max(abs(intercept), 1e-12) * 1e-6))):
        plus = _map_line(slope + ds, intercept + di, params)
        minus = _map_line(slope - ds, intercept - di, params)
        step = 2.0 * (ds or di)
        jac[:, k] = (np.array(plus) - np.array(minus)) / step
    errors = np.sqrt(np.clip(np.diag(jac @ cov @ jac.T), 0.0, None))

    fitted_params = with_overrides(_gray(params), {"mecsel.L_eg": l_eg, "mecsel.G_eg": g_eg})
    sse = _objective(lambda _: fitted_params, curve, settings)(np.zeros(1))
    logger.info("Linear MECSEL calibration: L_eg=%.5g Hz, G_eg=%.5g Hz", l_eg, g_eg)
    return CalibrationResult(
        fitted={
            "L_eg": FittedValue(value=l_eg, std_error=float(errors[0])),
            "G_eg": FittedValue(value=g_eg, std_error=float(errors[1])),
        },
        sse=sse,
        iterations=1,
        stage=CalibrationStage.MECSEL,
        method="linear regression mapped through the closed-form threshold",
        n_points=int(mask.sum()),
        dataset_hash=points_hash(curve.points),
    )


def fit_mecsel_params(
    curve: PowerCurve, params: ModelParams, settings: Optional[LtmSettings] = None
) -> CalibrationResult:
    """Fit (L_eg, G_eg) with the full solver, seeded by fit_mecsel_linear."""
    settings = settings or get_settings()
    seed = fit_mecsel_linear(curve, params, settings)
    l0, g0 = seed.fitted["L_eg"].value, seed.fitted["G_eg"].value
    base = _gray(params)

    def params_for(z: np.ndarray) -> Optional[ModelParams]:
        if np.any(z <= 0):
            return None
        return with_overrides(base, {"mecsel.L_eg": z[0] * l0, "mecsel.G_eg": z[1] * g0})

    sse = _objective(params_for, curve, settings)
    start_sse = sse(np.ones(2))
    # Normalized by the data power so the simplex tolerances are relative.
    scale = max(float(np.sum(curve.outputs**2)), 1e-300)
    result = minimize(
        lambda z: sse(z) / scale,
        np.ones(2),
        method="Nelder-Mead",
        options={
            "xatol": settings.calibration_rtol,
            "fatol": settings.calibration_rtol**2,
            "maxiter": 2000,
            "initial_simplex": np.array([[1.0, 1.0], [1.02, 1.0], [1.0, 1.02]]),
        },
    )
    if not result.success:
        raise CalibrationError(f"MECSEL calibration did not converge: {result.message}")
    l_eg, g_eg = result.x[0] * l0, result.x[1] * g0
    kappa = params.cavity.kappa
    if g_eg <= kappa:
        raise CalibrationError(f"fitted G_eg {g_eg:.4g} Hz does not exceed kappa {kappa:.4g} Hz; unphysical")

    best = float(result.fun * scale)
    fitted_params = params_for(result.x)
    n_points = _n_used(fitted_params, curve, settings)
    errors = _curvature_errors(sse, result.x, np.array([1e-3, 1e-3]), best, n_points)
    logger.info(
        "MECSEL calibration: L_eg=%.5g Hz, G_eg=%.5g Hz, SSE %.4g -> %.4g W^2 in %d iterations",
        l_eg, g_eg, start_sse, best, result.nit,
    )
    return CalibrationResult(
        fitted={
            "L_eg": FittedValue(value=l_eg, std_error=None if errors[0] is None else errors[0] * l0),
            "G_eg": FittedValue(value=g_eg, std_error=None if errors[1] is None else errors[1] * g0),
        },
        sse=best,
        iterations=int(result.nit),
        stage=CalibrationStage.MECSEL,
        method="Nelder-Mead",
        n_points=n_points,
        dataset_hash=points_hash(curve.points),
    )


def _fit_one(
    curve: PowerCurve,
    params: ModelParams,
    key: str,
    upper: float,
    stage: CalibrationStage,
    zero_flag: str,
    settings: LtmSettings,
) -> CalibrationResult:
    """Bounded 1-D fit of one parameter: coarse scan, then Brent on the best cell."""

    def params_for(x: np.ndarray) -> Optional[ModelParams]:
        if x[0] < 0:
            return None
        return with_overrides(params, {key: float(x[0])})

    sse = _objective(params_for, curve, settings)
    grid = np.linspace(0.0, upper, SCAN_POINTS)
    scan = np.array([sse(np.array([g])) for g in grid])
    if not np.any(np.isfinite(scan)):
        raise CalibrationError(f"objective for {key} is undefined over [0, {upper:.4g}]")
    i = int(np.nanargmin(np.where(np.isfinite(scan), scan, np.nan)))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, SCAN_POINTS - 1)]

    result = minimize_scalar(
        lambda v: sse(np.array([v])),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": settings.calibration_rtol * upper, "maxiter": 500},
    )
    if not result.success:
        raise CalibrationError(f"{key} calibration did not converge: {result.message}")
    value, best = float(result.x), float(result.fun)
    if scan[i] < best:
        value, best = float(grid[i]), float(scan[i])

    flags = []
    if value < settings.calibration_zero_fraction * upper:
        flags.append(zero_flag)
        logger.warning("%s fitted near zero: %s", key, zero_flag)

    n_points = _n_used(params_for(np.array([value])), curve, settings)
    step = max(1e-3 * value, 1e-6 * upper)
    x = np.array([max(value, step)])
    errors = _curvature_errors(sse, x, np.array([step]), sse(x), n_points)
    name = key.split(".", 1)[1]
    logger.info("%s calibration: %s=%.5g Hz, SSE %.4g W^2", stage.value, name, value, best)
    return CalibrationResult(
        fitted={name: FittedValue(value=value, std_error=errors[0])},
        sse=best,
        iterations=int(result.nfev) + SCAN_POINTS,
        stage=stage,
        method="grid scan + bounded Brent",
        n_points=n_points,
        flags=flags,
        dataset_hash=points_hash(curve.points),
    )


def fit_singlet_coupling(
    curve: PowerCurve, params: ModelParams, settings: Optional[LtmSettings] = None
) -> CalibrationResult:
    """Fit G_S to an NV-pumped, off-resonant MECSEL sweep with L_eg and G_eg frozen."""
    settings = settings or get_settings()
    _require_lasing(curve, settings, SweptAxis.MECSEL_PUMP)
    return _fit_one(
        curve, params, "nv.G_S", settings.calibration_g_s_max,
        CalibrationStage.SINGLET, "no NV absorption detected", settings,
    )


def fit_rabi(curve: PowerCurve, params: ModelParams, settings: Optional[LtmSettings] = None) -> CalibrationResult:
    """Fit the Rabi frequency to a resonant (Delta = 0) sweep with everything else frozen."""
    settings = settings or get_settings()
    _require_lasing(curve, settings, SweptAxis.MECSEL_PUMP)
    resonant = with_overrides(params, {"nv.Delta": 0.0})
    return _fit_one(
        curve, resonant, "nv.Omega", settings.calibration_omega_max,
        CalibrationStage.RABI, "resonance has no effect", settings,
    )


def predict_threshold_shift(
    params: ModelParams,
    axis: SweptAxis = SweptAxis.MECSEL_PUMP,
    grid: Optional[list[float]] = None,
    settings: Optional[LtmSettings] = None,
) -> ThresholdShift:
    """Thresholds (MECSEL axis) or turn-off NV pumps (NV axis) for off-resonant and resonant drive.

    Off-resonant uses params.nv.Delta as given; resonant sets Delta = 0.
    """
    settings = settings or get_settings()
    resonant_params = with_overrides(params, {"nv.Delta": 0.0})
    if axis is SweptAxis.MECSEL_PUMP:
        grid = grid or default_grid(0.0, 4.0, 161)
        values = [
            extract_threshold(sweep_mecsel_pump(p, grid, settings=settings), settings.threshold_points).threshold
            for p in (params, resonant_params)
        ]
    else:
        grid = grid or default_grid(0.0, 8.0, 161)
        values = [
            extract_turn_off(sweep_nv_pump(p, grid, settings=settings), settings.threshold_points).turn_off
            for p in (params, resonant_params)
        ]
    logger.info("Predicted %s shift: %.4g W -> %.4g W", axis.value, values[0], values[1])
    return ThresholdShift(swept_axis=axis, off_resonant=values[0], resonant=values[1])


def add_noise(curve: PowerCurve, level: float, seed: Optional[int] = None) -> PowerCurve:
    """Multiplicative Gaussian noise on the lasing points of a curve."""
    if level < 0:
        raise DomainError(f"noise level must be non-negative, got {level}")
    rng = np.random.default_rng(seed)
    outputs = curve.outputs
    noisy = np.where(outputs > 0, outputs * (1.0 + level * rng.standard_normal(len(outputs))), 0.0)
    noisy = np.clip(noisy, 0.0, None)
    return curve.model_copy(update={"points": [(float(p), float(o)) for p, o in zip(curve.pumps, noisy)]})
