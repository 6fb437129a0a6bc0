"""ODMR spectra: synthesis through the laser model and multi-Lorentzian fitting.

Fits run on photon rates (photons/s). The line shape is

    I(nu) = I0 * (1 - sum_k C_k * fwhm_k^2 / (fwhm_k^2 + 4 (nu - nu_k)^2))
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks, peak_widths
from scipy.special import expit, logit

from ltm.config import LtmSettings, get_settings
from ltm.errors import DomainError, FitError, LtmError
from ltm.schemas import (
    ContrastRow,
    Family,
    LorentzianFit,
    LorentzianResonance,
    ModelParams,
    OdmrResonance,
    OdmrSpectrum,
    PeakGuess,
    PhysicalConstants,
)
from ltm.services.parameters import photon_energy
from ltm.services.steady_state import multi_family_steady_state, output_power

logger = logging.getLogger(__name__)

_CONTRAST_BOUND = 1.0 - 1e-6
_LOGIT_CLIP = 1e-9


def _dips(freqs, baseline, centers, fwhms, contrasts) -> np.ndarray:
    freqs = np.asarray(freqs, dtype=float)[:, None]
    centers, fwhms, contrasts = (np.asarray(v, dtype=float)[None, :] for v in (centers, fwhms, contrasts))
    shape = fwhms**2 / (fwhms**2 + 4.0 * (freqs - centers) ** 2)
    return baseline * (1.0 - np.sum(contrasts * shape, axis=1))


def _unpack(fit: LorentzianFit) -> tuple[float, list[float], list[float], list[float]]:
    rs = fit.resonances
    return fit.baseline, [r.center for r in rs], [r.fwhm for r in rs], [r.contrast for r in rs]


def lorentzian_model(freqs, fit: LorentzianFit) -> np.ndarray:
    """Evaluate a fitted multi-Lorentzian (photons/s) at the given frequencies."""
    return _dips(freqs, *_unpack(fit))


def lorentzian_slope(freqs, fit: LorentzianFit) -> np.ndarray:
    """Analytic dI/dnu of the fitted line shape (photons/s per Hz)."""
    baseline, centers, fwhms, contrasts = _unpack(fit)
    x = np.asarray(freqs, dtype=float)[:, None] - np.asarray(centers)[None, :]
    w = np.asarray(fwhms)[None, :]
    c = np.asarray(contrasts)[None, :]
    return baseline * np.sum(c * w**2 * 8.0 * x / (w**2 + 4.0 * x**2) ** 2, axis=1)


def synthesize_odmr(
    params: ModelParams,
    freq_grid: Sequence[float],
    resonances: Sequence[OdmrResonance],
    label: str = "",
    settings: Optional[LtmSettings] = None,
) -> OdmrSpectrum:
    """Laser output against microwave frequency; each resonance is one NV family."""
    if not resonances:
        raise DomainError("at least one resonance is required")
    freqs = np.asarray(freq_grid, dtype=float)
    if len(freqs) == 0 or np.any(np.diff(freqs) <= 0):
        raise DomainError("frequency grid must be non-empty and strictly ascending")
    settings = settings or get_settings()

    def evaluate(freq: float) -> float:
        families = [Family(weight=r.weight, delta=freq - r.center) for r in resonances]
        try:
            solution = multi_family_steady_state(params, families, settings=settings)
        except LtmError:
            logger.error("Steady state failed at microwave frequency %.9g Hz", freq)
            raise
        return output_power(solution.n_photons, params)

    logger.info("Synthesizing ODMR spectrum over %d frequencies, %d resonance(s)", len(freqs), len(resonances))
    if settings.sweep_workers > 1:
        with ThreadPoolExecutor(max_workers=settings.sweep_workers) as executor:
            outputs = list(executor.map(evaluate, freqs))
    else:
        outputs = [evaluate(f) for f in freqs]

    return OdmrSpectrum(
        points=[(float(f), float(o)) for f, o in zip(freqs, outputs)],
        params_snapshot=params,
        label=label,
    )


def baseline_estimate(outputs: np.ndarray) -> float:
    """Median of the top quartile of the outputs."""
    outputs = np.asarray(outputs, dtype=float)
    top = outputs[outputs >= np.percentile(outputs, 75)]
    return float(np.median(top))


def _find_dips(depth: np.ndarray, threshold: float, distance: Optional[int] = None):
    peaks, properties = find_peaks(depth, height=threshold, prominence=threshold, distance=distance)
    return peaks, properties["prominences"]


def detect_peaks(spectrum: OdmrSpectrum, min_depth: float = 0.05) -> list[PeakGuess]:
    """Initial guesses for the dips of a spectrum, sorted by center.

    A dip must be deeper than min_depth * baseline both in absolute terms and
    relative to its surroundings. Minima closer than half the width of the
    most prominent dip collapse onto the deepest of them, so noise on a dip
    floor yields one candidate.
    """
    freqs, outputs = spectrum.frequencies, spectrum.outputs
    if len(freqs) < 5:
        raise DomainError(f"peak detection needs at least 5 points, got {len(freqs)}")
    baseline = baseline_estimate(outputs)
    if baseline <= 0:
        return []

    depth = baseline - outputs
    threshold = min_depth * baseline
    peaks, prominences = _find_dips(depth, threshold)
    if len(peaks) == 0:
        return []
    top = int(np.argmax(prominences))
    top_width = peak_widths(depth, peaks[top : top + 1], rel_height=0.5)[0][0]
    distance = int(top_width // 2)
    if distance > 1:
        peaks, prominences = _find_dips(depth, threshold, distance)

    _, _, left, right = peak_widths(depth, peaks, rel_height=0.5)
    index = np.arange(len(freqs))
    fwhms = np.interp(right, index, freqs) - np.interp(left, index, freqs)
    step = float(np.min(np.diff(freqs)))

    guesses = [
        PeakGuess(
            center=float(freqs[p]),
            fwhm=float(max(w, step)),
            contrast=float(np.clip(depth[p] / baseline, 0.0, 1.0)),
            prominence=float(prom / baseline),
        )
        for p, w, prom in zip(peaks, fwhms, prominences)
    ]
    logger.debug("Detected %d dip(s)", len(guesses))
    return sorted(guesses, key=lambda g: g.center)


def _photon_rates(spectrum: OdmrSpectrum, settings: LtmSettings) -> np.ndarray:
    snapshot = spectrum.params_snapshot
    if snapshot is not None:
        energy = photon_energy(snapshot.cavity.wavelength, snapshot.constants)
    else:
        energy = photon_energy(settings.wavelength, PhysicalConstants())
    return spectrum.outputs / energy


def fit_lorentzians(
    spectrum: OdmrSpectrum,
    k: int,
    guesses: Optional[Sequence[PeakGuess]] = None,
    settings: Optional[LtmSettings] = None,
) -> LorentzianFit:
    """Least-squares fit of a k-dip Lorentzian with one shared baseline.

    Parameters are mapped onto unbounded ones (log baseline, logistic
    center/fwhm/contrast) so the bounds hold at every iteration.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    settings = settings or get_settings()
    freqs = spectrum.frequencies
    y = _photon_rates(spectrum, settings)
    if len(freqs) < 3 * k + 2:
        raise DomainError(f"{len(freqs)} points cannot constrain {3 * k + 1} parameters")

    if guesses is None:
        detected = detect_peaks(spectrum)
        if k > len(detected):
            raise FitError(f"asked for {k} resonance(s) but only {len(detected)} dip(s) detected; pass guesses")
        kept = sorted(detected, key=lambda g: (g.prominence, g.contrast), reverse=True)[:k]
        guesses = sorted(kept, key=lambda g: g.center)
    elif len(guesses) != k:
        raise DomainError(f"expected {k} guesses, got {len(guesses)}")

    scale = float(np.max(y))
    if scale <= 0:
        raise FitError("spectrum has no signal to fit")
    y_n = y / scale
    span = float(freqs[-1] - freqs[0])
    margin = max(g.fwhm for g in guesses)
    lo, hi = float(freqs[0]) - margin, float(freqs[-1]) + margin

    def to_physical(u: np.ndarray):
        baseline = np.exp(u[0])
        rest = u[1:].reshape(k, 3)
        centers = lo + (hi - lo) * expit(rest[:, 0])
        fwhms = span * expit(rest[:, 1])
        contrasts = expit(rest[:, 2])
        return baseline, centers, fwhms, contrasts

    def clipped_logit(v: float) -> float:
        return float(logit(np.clip(v, _LOGIT_CLIP, 1.0 - _LOGIT_CLIP)))

    baseline_guess = baseline_estimate(y_n)
    u0 = [np.log(max(baseline_guess, 1e-12))]
    for g in guesses:
        u0 += [
            clipped_logit((g.center - lo) / (hi - lo)),
            clipped_logit(g.fwhm / span),
            clipped_logit(g.contrast),
        ]
    u0 = np.asarray(u0)

    def residuals(u: np.ndarray) -> np.ndarray:
        return _dips(freqs, *to_physical(u)) - y_n

    n_params = len(u0)
    result = least_squares(
        residuals,
        u0,
        method="lm",
        diff_step=settings.fit_diff_step,
        xtol=settings.fit_xtol,
        ftol=settings.fit_ftol,
        max_nfev=settings.fit_max_iterations * (n_params + 1),
    )
    if result.status == 0 or not np.all(np.isfinite(result.x)):
        raise FitError(f"Lorentzian fit did not converge after {result.nfev} evaluations: {result.message}")

    baseline_n, centers, fwhms, contrasts = to_physical(result.x)
    baseline = float(baseline_n * scale)

    jac = result.jac
    dof = max(len(freqs) - n_params, 1)
    s_sq = 2.0 * result.cost / dof
    try:
        cov_u = np.linalg.inv(jac.T @ jac) * s_sq
    except np.linalg.LinAlgError:
        cov_u = np.linalg.pinv(jac.T @ jac) * s_sq
    rest = result.x[1:].reshape(k, 3)
    derivs = [baseline]
    for i in range(k):
        e = expit(rest[i])
        derivs += [(hi - lo) * e[0] * (1 - e[0]), span * e[1] * (1 - e[1]), e[2] * (1 - e[2])]
    d = np.diag(derivs)
    covariance = d @ cov_u @ d

    # Resonances in center order; covariance rows follow
    order = np.argsort(centers, kind="stable")
    centers, fwhms, contrasts = centers[order], fwhms[order], contrasts[order]
    index = np.concatenate(([0], (1 + 3 * order[:, None] + np.arange(3)[None, :]).ravel()))
    covariance = covariance[np.ix_(index, index)]

    names = ["baseline"]
    bounds = {"baseline": (0.0, float("inf"))}
    flags = []
    for i in range(1, k + 1):
        names += [f"center_{i}", f"fwhm_{i}", f"contrast_{i}"]
        bounds.update({f"center_{i}": (lo, hi), f"fwhm_{i}": (0.0, span), f"contrast_{i}": (0.0, 1.0)})
        if contrasts[i - 1] > _CONTRAST_BOUND:
            flags.append(f"contrast_at_bound:{i}")
            logger.warning("Resonance %d contrast pinned at the upper bound", i)

    rms = float(np.sqrt(np.mean(result.fun**2)) * scale)
    logger.info("Fitted %d Lorentzian(s) in %d evaluations, rms %.4g photons/s", k, result.nfev, rms)
    return LorentzianFit(
        baseline=baseline,
        resonances=[
            LorentzianResonance(center=float(c), fwhm=float(w), contrast=float(ct))
            for c, w, ct in zip(centers, fwhms, contrasts)
        ],
        residual_rms=rms,
        covariance=covariance.tolist(),
        parameter_names=names,
        bounds=bounds,
        flags=flags,
        iterations=int(result.nfev),
    )


def contrast_report(fit: LorentzianFit) -> list[ContrastRow]:
    rows = [ContrastRow(center=r.center, contrast=r.contrast, fwhm=r.fwhm) for r in fit.resonances]
    return sorted(rows, key=lambda r: r.contrast, reverse=True)


def odmr_contrast(spectrum: OdmrSpectrum, center: float) -> float:
    """(off - on) / off, with off the spectrum baseline and on the output at center."""
    off = baseline_estimate(spectrum.outputs)
    if off <= 0:
        raise DomainError("laser is off across the whole spectrum; contrast is undefined")
    on = float(np.interp(center, spectrum.frequencies, spectrum.outputs))
    return (off - on) / off
