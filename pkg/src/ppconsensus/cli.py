"""Command-line entry point.

Exit status: 0 for a certified run (or a feasible/connected verdict), 1 for a
violation, halt or negative verdict, 2 for invalid input.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from .analysis import compliance, consensus_metrics, export_csv, export_funnels_csv
from .controller import FeasibilityReport, validate_gains
from .errors import FunnelViolation, ScenarioError, SimulationHalted
from .scenario_file import load_scenario_file, paper_scenario
from .simulator import Scenario, simulate
from .topology import connectivity_windows, is_connected, is_jointly_connected

OUT_DIR_ENV = "PPCONSENSUS_OUT_DIR"

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2


def _alpha_bars(scenario: Scenario, paper: bool) -> tuple[float, float]:
    if not paper:
        return scenario.alpha_bars()
    # the looser bound alpha <= decay rate
    ay = max(pf.decay for pf in [scenario.funnel_y, *scenario.overrides_y.values()])
    az = max(pf.decay for pf in [scenario.funnel_z, *scenario.overrides_z.values()])
    return ay, az


def _format_report(report: FeasibilityReport) -> list[str]:
    lines = [f"alpha_bar_y = {report.alpha_bar_y:.17g}, alpha_bar_z = {report.alpha_bar_z:.17g}"]
    labels = (
        "4 h1 h4 - (h3 - h2)^2",
        "h3 - h2 - 2 h5 alpha_bar_y",
        "h4 phi - h6 alpha_bar_z",
        "2 h6 phi - a2 phi (h3 - h2) - 2 h6 a4",
    )
    for k, (label, value) in enumerate(zip(labels, report.margins), start=1):
        lines.append(f"c{k} = {value:.17g}  [{label}]  {'ok' if value > 0 else 'FAIL'}")
    lines.append(f"gains feasible: {'yes' if report.feasible else 'no'}")
    return lines


def _load(path: str):
    """Load a scenario file, mapping failures onto exit codes."""
    try:
        return load_scenario_file(path)
    except ScenarioError as exc:
        click.echo(f"error: {path}: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    except FunnelViolation as exc:
        click.echo(f"halt: {path}: {exc}", err=True)
        sys.exit(EXIT_FAIL)


def run_scenario(scenario: Scenario, csv_path: Path | None, paper_alpha_bars: bool = False,
                 funnels_path: Path | None = None) -> int:
    """Simulate, certify and print the summary; returns the exit status."""
    report = validate_gains(scenario.gains, *_alpha_bars(scenario, paper_alpha_bars))
    for line in _format_report(report):
        click.echo(line)
    click.echo(f"jointly connected: {'yes' if is_jointly_connected(scenario.schedule) else 'no'}")
    try:
        traj = simulate(scenario)
    except SimulationHalted as exc:
        click.echo(f"halt: {exc.cause}", err=True)
        click.echo(f"samples recorded before halt: {len(exc.trajectory)}", err=True)
        if csv_path is not None and exc.trajectory.samples:
            export_csv(exc.trajectory, csv_path)
        return EXIT_FAIL
    comp = compliance(traj, scenario)
    metrics = consensus_metrics(traj)
    for name, ch in (("position", comp.position), ("velocity", comp.velocity)):
        where = "" if ch.edge is None else f" at t={ch.t:.17g}, edge {ch.edge[0]}-{ch.edge[1]}"
        click.echo(f"{name} funnel min margin = {ch.min_margin:.17g}{where}")
    click.echo(f"funnel compliance: {'violated' if comp.violated else 'no violation'}")
    click.echo(f"terminal max |y| = {metrics.terminal_max_y:.17g}")
    click.echo(f"terminal max |z| = {metrics.terminal_max_z:.17g}")
    settle = "not settled" if metrics.settle_time is None else f"{metrics.settle_time:.17g}"
    click.echo(f"settle time (threshold {metrics.threshold:.17g}) = {settle}")
    click.echo(f"mean velocity drift = {metrics.mean_velocity_drift:.17g}")
    click.echo(f"mean position drift = {metrics.mean_position_drift:.17g}")
    guards = sum(1 for e in traj.events if e.kind == "guard")
    click.echo(f"guard activations = {guards}")
    if csv_path is not None:
        rows = export_csv(traj, csv_path)
        click.echo(f"wrote {rows} rows to {csv_path}")
    if funnels_path is not None:
        rows = export_funnels_csv(traj, funnels_path)
        click.echo(f"wrote {rows} rows to {funnels_path}")
    certified = not comp.violated and metrics.settled
    click.echo(f"certificate: {'certified' if certified else 'NOT certified'}")
    return EXIT_OK if certified else EXIT_FAIL


@click.group()
def main():
    """Prescribed-performance consensus simulator."""


@main.command("simulate")
@click.argument("file", type=click.Path(dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Trajectory CSV destination.")
@click.option("--dt", type=float, help="Override the integration step.")
@click.option("--paper-alpha-bars", is_flag=True, help="Use the decay rates as alpha bounds.")
def simulate_cmd(file, csv_path, dt, paper_alpha_bars):
    """Run a scenario file and certify the result."""
    loaded = _load(file)
    scenario = loaded.scenario
    if dt is not None:
        try:
            scenario = scenario.with_dt(dt)
        except ScenarioError as exc:
            click.echo(f"error: --dt: {exc}", err=True)
            sys.exit(EXIT_INPUT)
    out = Path(csv_path) if csv_path else loaded.csv_path
    sys.exit(run_scenario(scenario, out, paper_alpha_bars))


@main.command("validate-gains")
@click.argument("file", type=click.Path(dir_okay=False))
@click.option("--paper-alpha-bars", is_flag=True, help="Use the decay rates as alpha bounds.")
def validate_gains_cmd(file, paper_alpha_bars):
    """Check the gain conditions for a scenario's funnels."""
    scenario = _load(file).scenario
    report = validate_gains(scenario.gains, *_alpha_bars(scenario, paper_alpha_bars))
    for line in _format_report(report):
        click.echo(line)
    sys.exit(EXIT_OK if report.feasible else EXIT_FAIL)


@main.command("check-topology")
@click.argument("file", type=click.Path(dir_okay=False))
def check_topology_cmd(file):
    """Check joint connectivity of a scenario's switching schedule."""
    schedule = _load(file).scenario.schedule
    for gid, graph in schedule.graphs.items():
        edges = " ".join(f"{i}-{j}" for i, j in graph.edges) or "(none)"
        click.echo(f"{gid}: {edges}  connected: {'yes' if is_connected(graph) else 'no'}")
    if not schedule.cyclic:
        windows = connectivity_windows(schedule)
        click.echo(f"connected windows: {windows if windows is not None else 'none'}")
    ok = is_jointly_connected(schedule)
    click.echo(f"jointly connected: {'yes' if ok else 'no'}")
    sys.exit(EXIT_OK if ok else EXIT_FAIL)


@main.command("reproduce-paper")
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              help=f"Output directory (default ${OUT_DIR_ENV} or ./paper_run).")
def reproduce_paper_cmd(out_dir):
    """Run the bundled five-agent scenario and write CSVs."""
    out = Path(out_dir or os.environ.get(OUT_DIR_ENV) or "paper_run")
    out.mkdir(parents=True, exist_ok=True)
    sys.exit(run_scenario(paper_scenario(), out / "trajectory.csv",
                          funnels_path=out / "funnels.csv"))


if __name__ == "__main__":
    main()
