import logging
import sys
from typing import Optional, Sequence

import click

from ltm.commands import analysis, fitting, simulate
from ltm.config import get_settings
from ltm.errors import LtmError


class LtmCommandError(click.ClickException):
    """Domain failure: exit code 1, `error:` prefixed message on stderr."""

    exit_code = 1

    def show(self, file=None) -> None:
        click.echo(f"error: {self.format_message()}", err=True)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("-v", "--verbose", count=True, help="More log output on stderr (-v info, -vv debug).")
def cli(verbose: int):
    """Two-media laser threshold magnetometry: simulate, fit and analyze."""
    level = get_settings().numeric_log_level
    if verbose:
        level = min(level, logging.INFO if verbose == 1 else logging.DEBUG)
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


for module in (simulate, fitting, analysis):
    for command in module.commands:
        cli.add_command(command)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit code: 0 ok, 1 domain error, 2 usage error."""
    try:
        result = cli.main(args=list(argv) if argv is not None else None, prog_name="ltm", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except LtmError as e:
        error = LtmCommandError(str(e))
        error.show()
        return error.exit_code
    except click.Abort:
        click.echo("error: aborted", err=True)
        return 1
    return result if isinstance(result, int) else 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
