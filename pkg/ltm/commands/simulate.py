from typing import Optional

import click

from ltm.commands import (
    GridRange,
    config_options,
    dry_run_option,
    echo_params,
    open_output,
    output_options,
    resolve_params,
    write_plot_data,
)
from ltm.schemas import OdmrResonance, SweptAxis
from ltm.services.calibration import add_noise
from ltm.services.laser import at_pump, sweep_mecsel_pump, sweep_nv_pump
from ltm.services.odmr import synthesize_odmr
from ltm.utils import write_odmr, write_power_curve


class ResonanceSpec(click.ParamType):
    """`center[:weight]` in Hz."""

    name = "center[:weight]"

    def convert(self, value, param, ctx):
        if isinstance(value, OdmrResonance):
            return value
        center, _, weight = str(value).partition(":")
        try:
            return OdmrResonance(center=float(center), weight=float(weight) if weight else 1.0)
        except ValueError:
            self.fail(f"expected center[:weight], got '{value}'", param, ctx)


def _fixed_pumps(params, mecsel_pump: Optional[float], nv_pump: Optional[float]):
    if mecsel_pump is not None:
        params = at_pump(params, SweptAxis.MECSEL_PUMP, mecsel_pump)
    if nv_pump is not None:
        params = at_pump(params, SweptAxis.NV_PUMP, nv_pump)
    return params


pump_options = [
    click.option("--mecsel-pump", type=float, help="Fixed MECSEL pump power (W); sets mecsel.Lambda_ge."),
    click.option("--nv-pump", type=float, help="Fixed NV pump power (W); sets nv.Lambda_NV."),
]


def with_pump_options(func):
    for option in reversed(pump_options):
        func = option(func)
    return func


@click.command("simulate-power")
@config_options
@with_pump_options
@click.option(
    "--axis", type=click.Choice([a.value for a in SweptAxis]), default=SweptAxis.MECSEL_PUMP.value,
    show_default=True, help="Which pump the grid sweeps.",
)
@click.option("--range", "grid", type=GridRange(), required=True, help="Pump grid in W, start:stop:n.")
@click.option("--label", default="", help="Curve label written to the metadata.")
@click.option("--noise", type=float, default=0.0, show_default=True, help="Multiplicative Gaussian noise level.")
@click.option("--seed", type=int, default=0, show_default=True, help="Noise seed.")
@output_options
@dry_run_option
def simulate_power(
    config_path, overrides, mecsel_pump, nv_pump, axis, grid, label, noise, seed, output, plot_data, no_meta, dry_run
):
    """Laser output power against MECSEL or NV pump power (CSV pump_w,output_w).

    Plot data columns: pump_w output_w.
    """
    params = _fixed_pumps(resolve_params(config_path, overrides), mecsel_pump, nv_pump)
    if dry_run:
        echo_params(params)
        return
    sweep = sweep_mecsel_pump if SweptAxis(axis) is SweptAxis.MECSEL_PUMP else sweep_nv_pump
    curve = sweep(params, grid, label=label)
    if noise > 0:
        curve = add_noise(curve, noise, seed)
    with open_output(output) as stream:
        write_power_curve(curve, stream, metadata=not no_meta)
    if plot_data:
        write_plot_data(plot_data, ["pump_w", "output_w"], [curve.pumps, curve.outputs])


@click.command("simulate-odmr")
@config_options
@with_pump_options
@click.option("--range", "grid", type=GridRange(), required=True, help="Microwave frequency grid in Hz, start:stop:n.")
@click.option(
    "--resonance", "resonances", type=ResonanceSpec(), multiple=True,
    help="Resonance center (Hz) with optional family weight; repeatable. Default: one resonance at 0 Hz.",
)
@click.option("--label", default="", help="Spectrum label written to the metadata.")
@output_options
@dry_run_option
def simulate_odmr(config_path, overrides, mecsel_pump, nv_pump, grid, resonances, label, output, plot_data, no_meta, dry_run):
    """Laser output against microwave frequency (CSV frequency_hz,output_w).

    Weights are normalized to sum to 1. Plot data columns: frequency_hz output_w.
    """
    params = _fixed_pumps(resolve_params(config_path, overrides), mecsel_pump, nv_pump)
    if dry_run:
        echo_params(params)
        return
    resonances = list(resonances) or [OdmrResonance(center=0.0)]
    total = sum(r.weight for r in resonances)
    if total <= 0:
        raise click.BadParameter("resonance weights must sum to a positive value", param_hint="--resonance")
    resonances = [r.model_copy(update={"weight": r.weight / total}) for r in resonances]
    spectrum = synthesize_odmr(params, grid, resonances, label=label)
    with open_output(output) as stream:
        write_odmr(spectrum, stream, metadata=not no_meta)
    if plot_data:
        write_plot_data(plot_data, ["frequency_hz", "output_w"], [spectrum.frequencies, spectrum.outputs])


commands = [simulate_power, simulate_odmr]
