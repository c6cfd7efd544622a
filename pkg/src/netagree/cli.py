"""Command line entry point.

Exit codes: 0 run completed (whatever the agreement verdict), 1 usage,
parse or configuration error, 2 solver blow-up, 3 I/O failure.
"""

import sys
from pathlib import Path

import click

from .runner import run as run_scenario
from .scenario import ScenarioError, bundled_scenario_names, bundled_scenario_text, parse_scenario
from .sim import SimulationDiverged

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3


class _Failure(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _read(source):
    path = Path(source)
    if path.exists():
        try:
            return path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise _Failure(EXIT_IO, f"cannot read {source}: {exc}") from exc
    if source in bundled_scenario_names():
        return bundled_scenario_text(source)
    raise _Failure(EXIT_CONFIG, f"no scenario file {source!r} and no bundled scenario of that name")


@click.group()
def cli():
    """Simulate and certify output agreement of networked passive agents."""


@cli.command("list")
def list_scenarios():
    """List bundled scenarios."""
    for name in bundled_scenario_names():
        click.echo(name)


@cli.command("show")
@click.argument("name")
def show(name):
    """Print the text of a bundled scenario."""
    click.echo(_read(name), nl=False)


@cli.command("run")
@click.argument("scenario")
@click.option("--out", "out_dir", default=".", show_default=True, type=click.Path(file_okay=False))
@click.option("--check-only", is_flag=True, help="Assemble and certify without simulating.")
@click.option("--dt", type=float, help="Override the integration step.")
@click.option("--t-end", type=float, help="Override the integration horizon.")
@click.option("--no-plot", is_flag=True, help="Skip the SVG output.")
def run_cmd(scenario, out_dir, check_only, dt, t_end, no_plot):
    """Run SCENARIO (a file path or a bundled scenario name)."""
    text = _read(scenario)
    try:
        scn = parse_scenario(text)
    except ScenarioError as exc:
        raise _Failure(EXIT_CONFIG, f"{scenario}:\n{exc}") from exc
    try:
        report = run_scenario(scn, out_dir, check_only=check_only, dt=dt, t_end=t_end, plot=not no_plot)
    except SimulationDiverged as exc:
        raise _Failure(EXIT_DIVERGED, str(exc)) from exc
    except OSError as exc:
        raise _Failure(EXIT_IO, str(exc)) from exc
    except ValueError as exc:
        raise _Failure(EXIT_CONFIG, str(exc)) from exc

    click.echo(f"{scn.name}: {report.status}")
    if report.certificate is not None:
        cert = report.certificate
        verdict = cert.get("verdict", "infeasible" if cert.get("feasible") is False else "n/a")
        click.echo(f"  certificate: {verdict}")
    if report.agreement is not None:
        value = report.agreement["value"]
        click.echo(f"  agreement: {'not detected' if value is None else f'{value:.6g}'}")
    for audit in report.audits:
        click.echo(f"  audit {audit['id']}: {audit['violations']} violations (min residual {audit['min_residual']:.3g})")


def main(argv=None):
    try:
        code = cli.main(args=argv, prog_name="netagree", standalone_mode=False)
    except _Failure as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.code
    except click.exceptions.Abort:
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    return code or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
