from pathlib import Path
from typing import Optional

import click
import numpy as np

from ltm.commands import dry_run_option, open_output, write_plot_data
from ltm.schemas import LorentzianFit, LorentzianResonance, PhysicalConstants
from ltm.services.parameters import photon_rate
from ltm.services.sensitivity import analyze_report, pointwise_sweep, sensor_tradeoff_analysis
from ltm.utils import read_fit_report, read_sensor_registry, write_json

_output_option = click.option(
    "-o", "--output", type=click.Path(dir_okay=False, allow_dash=True, path_type=Path), default=Path("-"),
    show_default=True, help="JSON report file, '-' for stdout.",
)


def _fit_from_numbers(
    fwhm: Optional[float],
    contrast: Optional[float],
    baseline: Optional[float],
    baseline_watts: Optional[float],
    wavelength: float,
) -> LorentzianFit:
    if fwhm is None or contrast is None:
        raise click.UsageError("give --fit, or --fwhm and --contrast with a baseline")
    if (baseline is None) == (baseline_watts is None):
        raise click.UsageError("give exactly one of --baseline and --baseline-watts")
    rate = baseline if baseline is not None else photon_rate(baseline_watts, wavelength)
    return LorentzianFit(
        baseline=rate,
        resonances=[LorentzianResonance(center=0.0, fwhm=fwhm, contrast=contrast)],
        residual_rms=0.0,
        covariance=[],
        parameter_names=[],
    )


@click.command("sensitivity")
@click.option("--fit", "fit_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON report written by fit-odmr.")
@click.option("--fwhm", type=float, help="Linewidth (Hz).")
@click.option("--contrast", type=float, help="ODMR contrast (0..1].")
@click.option("--baseline", type=float, help="Off-resonant signal (photons/s).")
@click.option("--baseline-watts", type=float, help="Off-resonant signal (W), converted with --wavelength.")
@click.option("--wavelength", type=float, default=1042e-9, show_default=True, help="Laser wavelength (m).")
@click.option("--resonance", type=int, help="Resonance index in the fit (default: deepest).")
@_output_option
@click.option(
    "--plot-data", type=click.Path(dir_okay=False, path_type=Path),
    help="Columns: frequency_hz eta_t_per_sqrthz (pointwise sensitivity over +-2 linewidths).",
)
@dry_run_option
def sensitivity(fit_path, fwhm, contrast, baseline, baseline_watts, wavelength, resonance, output, plot_data, dry_run):
    """Shot-noise-limited sensitivity and dynamic range of an ODMR resonance."""
    if fit_path is not None:
        fit = read_fit_report(fit_path)
    else:
        fit = _fit_from_numbers(fwhm, contrast, baseline, baseline_watts, wavelength)
    if dry_run:
        for i, r in enumerate(fit.resonances):
            click.echo(f"resonance {i}: center {r.center!r} Hz, fwhm {r.fwhm!r} Hz, contrast {r.contrast!r}")
        click.echo(f"baseline {fit.baseline!r} photons/s")
        return
    report = analyze_report(fit, resonance)
    constants = PhysicalConstants()
    payload = report.model_dump()
    payload["gyromagnetic_ratio_hz_per_t"] = constants.gyromagnetic_ratio
    with open_output(output) as stream:
        write_json(payload, stream)
    if plot_data:
        width = report.inputs.fwhm
        freqs = report.resonance_center + np.linspace(-2.0 * width, 2.0 * width, 401)
        sweep = pointwise_sweep(fit, freqs)
        write_plot_data(plot_data, ["frequency_hz", "eta_t_per_sqrthz"], [sweep.frequencies, sweep.eta])


@click.command("compare-sensors")
@click.argument("registry_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--reference", required=True, help="Registry name of the sensor to place against the trend line.")
@_output_option
@dry_run_option
def compare_sensors(registry_path, reference, output, dry_run):
    """Deviation of each sensor from the sensitivity / dynamic-range trade-off line."""
    sensors = read_sensor_registry(registry_path)
    matches = [s for s in sensors if s.name == reference]
    if not matches:
        raise click.BadParameter(f"no sensor named '{reference}' in the registry", param_hint="--reference")
    if dry_run:
        flagged = sum(s.flagged for s in sensors)
        click.echo(f"{len(sensors)} sensors, {flagged} flagged, reference '{reference}'")
        return
    others = [s for s in sensors if s.name != reference]
    analysis = sensor_tradeoff_analysis(others, matches[0])
    with open_output(output) as stream:
        write_json(analysis.model_dump(), stream)


commands = [sensitivity, compare_sensors]
