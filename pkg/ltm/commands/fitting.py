from pathlib import Path

import click

from ltm.commands import (
    config_options,
    dry_run_option,
    echo_curve,
    echo_params,
    open_output,
    resolve_params,
    write_plot_data,
)
from ltm.schemas import PeakGuess, SweptAxis
from ltm.services.calibration import fit_mecsel_params, fit_rabi, fit_singlet_coupling
from ltm.services.laser import extract_threshold, extract_turn_off
from ltm.services.odmr import fit_lorentzians, lorentzian_model
from ltm.services.parameters import dump_config, photon_energy, with_overrides
from ltm.utils import calibration_report, fit_report, read_odmr, read_power_curve, write_json

_existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)
_output_option = click.option(
    "-o", "--output", type=click.Path(dir_okay=False, allow_dash=True, path_type=Path), default=Path("-"),
    show_default=True, help="JSON report file, '-' for stdout.",
)


class GuessSpec(click.ParamType):
    """`center:fwhm:contrast` in Hz, Hz, fraction."""

    name = "center:fwhm:contrast"

    def convert(self, value, param, ctx):
        if isinstance(value, PeakGuess):
            return value
        parts = str(value).split(":")
        try:
            center, fwhm, contrast = (float(p) for p in parts)
            return PeakGuess(center=center, fwhm=fwhm, contrast=contrast)
        except ValueError:
            self.fail(f"expected center:fwhm:contrast, got '{value}'", param, ctx)


@click.command("fit-threshold")
@click.argument("curve_path", type=_existing_file)
@click.option("--points", type=int, help="Lasing points used by the line fit (default from settings).")
@click.option("--turn-off", is_flag=True, help="Fit the last lasing points of a falling NV-pump curve instead.")
@_output_option
@dry_run_option
def fit_threshold(curve_path, points, turn_off, output, dry_run):
    """Threshold and slope efficiency (or turn-off pump) of a measured power curve."""
    curve = read_power_curve(curve_path, SweptAxis.NV_PUMP if turn_off else None)
    if dry_run:
        echo_curve(curve)
        return
    if turn_off:
        fit = extract_turn_off(curve, points)
        payload = {
            "turn_off_w": fit.turn_off,
            "slope": fit.slope,
            "n_points_used": fit.n_points_used,
            "fit_rms_w": fit.fit_rms,
        }
    else:
        fit = extract_threshold(curve, points)
        payload = {
            "threshold_w": fit.threshold,
            "slope_efficiency": fit.slope_efficiency,
            "n_points_used": fit.n_points_used,
            "fit_rms_w": fit.fit_rms,
        }
    with open_output(output) as stream:
        write_json(payload, stream)


@click.command("calibrate")
@config_options
@click.option("--gray", "gray_path", type=_existing_file, required=True, help="NV-unpumped MECSEL-pump curve.")
@click.option("--green", "green_path", type=_existing_file, help="NV-pumped, off-resonant curve (fits G_S).")
@click.option("--blue", "blue_path", type=_existing_file, help="NV-pumped, resonant curve (fits Omega).")
@click.option(
    "--write-config", type=click.Path(dir_okay=False, path_type=Path), help="Write the calibrated parameters here."
)
@_output_option
@dry_run_option
def calibrate(config_path, overrides, gray_path, green_path, blue_path, write_config, output, dry_run):
    """Staged calibration: L_eg and G_eg, then G_S, then Omega."""
    if blue_path is not None and green_path is None:
        raise click.UsageError("--blue needs --green: the Rabi stage uses the fitted G_S")
    params = resolve_params(config_path, overrides)
    gray, green, blue = (
        None if path is None else read_power_curve(path, SweptAxis.MECSEL_PUMP)
        for path in (gray_path, green_path, blue_path)
    )
    if dry_run:
        echo_params(params)
        return

    stages = []
    mecsel = fit_mecsel_params(gray, params)
    stages.append(mecsel)
    params = with_overrides(
        params, {"mecsel.L_eg": mecsel.fitted["L_eg"].value, "mecsel.G_eg": mecsel.fitted["G_eg"].value}
    )
    if green is not None:
        singlet = fit_singlet_coupling(green, params)
        stages.append(singlet)
        params = with_overrides(params, {"nv.G_S": singlet.fitted["G_S"].value})
    if blue is not None:
        rabi = fit_rabi(blue, params)
        stages.append(rabi)
        params = with_overrides(params, {"nv.Omega": rabi.fitted["Omega"].value})

    if write_config is not None:
        with open_output(write_config) as stream:
            stream.write(dump_config(params))
    with open_output(output) as stream:
        write_json({"stages": [calibration_report(s) for s in stages]}, stream)


@click.command("fit-odmr")
@click.argument("spectrum_path", type=_existing_file)
@config_options
@click.option("-k", "--resonances", "k", type=int, default=1, show_default=True, help="Number of Lorentzian dips.")
@click.option("--guess", "guesses", type=GuessSpec(), multiple=True, help="Initial guess per dip (repeatable).")
@_output_option
@click.option(
    "--plot-data", type=click.Path(dir_okay=False, path_type=Path),
    help="Columns: frequency_hz data_photons_per_s model_photons_per_s.",
)
@dry_run_option
def fit_odmr(spectrum_path, config_path, overrides, k, guesses, output, plot_data, dry_run):
    """Multi-Lorentzian fit of an ODMR spectrum (photon rates; wavelength from the config)."""
    if guesses and len(guesses) != k:
        raise click.BadParameter(f"got {len(guesses)} guesses for {k} resonances", param_hint="--guess")
    params = resolve_params(config_path, overrides)
    spectrum = read_odmr(spectrum_path, params)
    if dry_run:
        echo_params(params)
        return
    fit = fit_lorentzians(spectrum, k, list(guesses) or None)
    with open_output(output) as stream:
        write_json(fit_report(fit), stream)
    if plot_data:
        freqs = spectrum.frequencies
        rates = spectrum.outputs / photon_energy(params.cavity.wavelength, params.constants)
        write_plot_data(
            plot_data,
            ["frequency_hz", "data_photons_per_s", "model_photons_per_s"],
            [freqs, rates, lorentzian_model(freqs, fit)],
        )


commands = [fit_threshold, calibrate, fit_odmr]
