"""Shared options and helpers for the CLI commands."""

import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, TextIO

import click
import numpy as np

from ltm.config import get_settings
from ltm.errors import ConfigError, DataFileError
from ltm.schemas import ModelParams, PowerCurve
from ltm.services.parameters import dump_config, parse_config, parse_override, validate, with_overrides


class GridRange(click.ParamType):
    """`start:stop:n` -> n evenly spaced values."""

    name = "start:stop:n"

    def convert(self, value, param, ctx):
        if isinstance(value, list):
            return value
        parts = str(value).split(":")
        if len(parts) != 3:
            self.fail(f"expected start:stop:n, got '{value}'", param, ctx)
        try:
            start, stop, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            self.fail(f"expected numbers in '{value}'", param, ctx)
        if n < 2 or stop <= start:
            self.fail(f"range needs start < stop and n >= 2, got '{value}'", param, ctx)
        return [float(v) for v in np.linspace(start, stop, n)]


class Override(click.ParamType):
    name = "key=value"

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        try:
            return parse_override(value)
        except ConfigError as e:
            self.fail(str(e), param, ctx)


def config_options(func):
    func = click.option(
        "--set", "overrides", type=Override(), multiple=True,
        help="Override one parameter, e.g. --set nv.Delta=0 (repeatable).",
    )(func)
    func = click.option(
        "--config", "config_path", type=click.Path(dir_okay=False, path_type=Path),
        help="Parameter file (key = value); built-in defaults when omitted.",
    )(func)
    return func


def output_options(func):
    func = click.option("--no-meta", is_flag=True, help="Omit '#' metadata lines from CSV output.")(func)
    func = click.option(
        "--plot-data", type=click.Path(dir_okay=False, path_type=Path),
        help="Also write whitespace-separated columns for plotting.",
    )(func)
    func = click.option(
        "-o", "--output", type=click.Path(dir_okay=False, allow_dash=True, path_type=Path), default=Path("-"),
        show_default=True, help="Output file, '-' for stdout.",
    )(func)
    return func


dry_run_option = click.option(
    "--dry-run", is_flag=True, help="Validate inputs, print the resolved parameters and stop."
)


def resolve_params(config_path: Optional[Path], overrides: tuple[tuple[str, float], ...]) -> ModelParams:
    """Load the config, apply overrides, then validate."""
    if config_path is None:
        params = ModelParams()
    else:
        try:
            text = config_path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {config_path}: {e}") from e
        params = parse_config(text)
    return validate(with_overrides(params, dict(overrides)))


def echo_params(params: ModelParams) -> None:
    click.echo(dump_config(params), nl=False)


def echo_curve(curve: PowerCurve) -> None:
    lasing = int(np.sum(curve.outputs > get_settings().output_floor))
    click.echo(f"{curve.label or '-'}: {len(curve.points)} points swept over {curve.swept_axis.value}, {lasing} lasing")


@contextmanager
def open_output(path: Path) -> Iterator[TextIO]:
    if str(path) == "-":
        yield sys.stdout
        return
    try:
        stream = open(path, "w", encoding="utf-8", newline="")
    except OSError as e:
        raise DataFileError(f"cannot write: {e}", str(path)) from e
    with stream:
        yield stream


def write_plot_data(path: Path, names: list[str], columns: list) -> None:
    """Whitespace-separated columns with one '#' header line naming them."""
    with open_output(path) as stream:
        stream.write("# " + " ".join(names) + "\n")
        for row in zip(*columns):
            stream.write(" ".join(repr(float(v)) for v in row) + "\n")
