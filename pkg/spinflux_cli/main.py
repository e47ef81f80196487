import csv
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import typer

from spinflux_cli import __version__
from spinflux_cli.config import get_settings
from spinflux_cli.engines.builtins import builtin_parameters
from spinflux_cli.engines.fv import ModelFluxEvaluator, closed_form_evaluator, solve
from spinflux_cli.engines.harness import BUILTIN_NAMES, block_size, run_certification, run_convergence
from spinflux_cli.engines.kmc import block_average, run_replicas
from spinflux_cli.engines.model import check_irreducibility, validate_all
from spinflux_cli.engines.thermo import thermo_table
from spinflux_cli.errors import SpinfluxError, UsageError, ValidationFailure
from spinflux_cli.model_io import load_experiment, load_model, resolve_model
from spinflux_cli.profiles import parse_profile
from spinflux_cli.ui import (
    build_certification_table,
    build_convergence_table,
    build_irreducibility_table,
    build_validation_table,
    console,
    format_value,
    format_verdict,
    format_witnesses,
    progress_bar,
    render_verdict,
    setup_logging,
)

app = typer.Typer(help="Spin systems with several conservation laws: validation, hydrodynamics and KMC", add_completion=False)

ModelOption = typer.Option(None, "--model", help="Model document (JSON)")
BuiltinOption = typer.Option(None, "--builtin", help="Built-in model: leroux or bricklayer")


def _fail(exc: SpinfluxError, as_json: bool = False):
    if as_json:
        print(json.dumps({"error": str(exc)}))
    else:
        console.print(f"[bold red]Error[/bold red]: {exc}")
    raise typer.Exit(code=exc.exit_code)


def _resolve(model: Optional[Path], builtin: Optional[str]):
    """(model, reference) from exactly one of --model / --builtin."""
    if (model is None) == (builtin is None):
        raise UsageError("give exactly one of --model or --builtin")
    if builtin is not None:
        if builtin not in BUILTIN_NAMES:
            raise UsageError(f"unknown built-in '{builtin}' (expected leroux or bricklayer)")
        return resolve_model(builtin), builtin
    return load_model(model), str(model)


def _parse_vector(text: Optional[str]):
    return None if text is None else np.array([float(v) for v in text.split(",")])


def _write_rows(path: Optional[Path], header: list[str], rows) -> None:
    handle = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    finally:
        if path:
            handle.close()


@app.callback(invoke_without_command=True)
def main_callback(
    ctx: typer.Context,
    log_level: Optional[str] = typer.Option(None, "--log-level", help="DEBUG, INFO, WARNING or ERROR"),
    version: bool = typer.Option(False, "--version", help="Print the version and exit"),
):
    """Configure logging before any subcommand runs."""
    if version:
        console.print(f"spinflux {__version__}")
        raise typer.Exit()
    setup_logging(log_level or get_settings().log_level)
    if ctx.invoked_subcommand is None:
        console.print(ctx.get_help())
        raise typer.Exit()


@app.command("validate")
def validate_cmd(
    model: Optional[Path] = ModelOption,
    builtin: Optional[str] = BuiltinOption,
    sites: int = typer.Option(4, "--sites", help="Largest torus for the irreducibility table (from 3)"),
    export_json: bool = typer.Option(False, "--json", help="Machine-readable output"),
):
    """Check conditions A-D and the reflection symmetry of a model."""
    try:
        spin_model, _ = _resolve(model, builtin)
        reports = validate_all(spin_model, n_sites=3)
        irreducibility = [reports[1]] + [check_irreducibility(spin_model, n) for n in range(4, sites + 1)]
    except SpinfluxError as exc:
        _fail(exc, export_json)

    passed = all(r.passed for r in reports) and all(r.passed for r in irreducibility)
    if export_json:
        print(json.dumps({
            "model": spin_model.name,
            "reports": [r.to_dict() for r in reports],
            "irreducibility": [r.to_dict() for r in irreducibility],
            "passed": passed,
        }, indent=2))
    else:
        table = build_validation_table(spin_model.name)
        for report in reports:
            detail = ", ".join(f"{k}={v}" for k, v in report.details.items())
            table.add_row(report.condition, format_verdict(report.passed), detail, format_witnesses(report.witnesses))
        console.print(table)
        irr_table = build_irreducibility_table()
        for report in irreducibility:
            irr_table.add_row(str(report.details["n_sites"]), str(report.details["classes"]),
                              str(report.details["failing_classes"]), format_verdict(report.passed))
        console.print(irr_table)
        render_verdict("Validation Complete", passed, [
            f"Model              : {spin_model.name}",
            f"States / n         : {spin_model.n_states} / {spin_model.n_cons}",
            "[dim]Irreducibility is certified per torus size only.[/dim]",
        ])
    if not passed:
        raise typer.Exit(code=ValidationFailure.exit_code)


@app.command("thermo")
def thermo_cmd(
    model: Optional[Path] = ModelOption,
    builtin: Optional[str] = BuiltinOption,
    points: int = typer.Option(21, "--points", help="Grid points per axis"),
    lower: Optional[str] = typer.Option(None, "--lower", help="Lower grid corner, comma separated"),
    upper: Optional[str] = typer.Option(None, "--upper", help="Upper grid corner, comma separated"),
    out: Optional[Path] = typer.Option(None, "--out", help="CSV file (stdout when omitted)"),
):
    """Tabulate θ(u), S(u) and the smallest eigenvalue of S'' over an admissible grid."""
    try:
        spin_model, _ = _resolve(model, builtin)
        rows = thermo_table(spin_model, points, _parse_vector(lower), _parse_vector(upper))
    except SpinfluxError as exc:
        _fail(exc)
    n = spin_model.n_cons
    header = [f"u_{i + 1}" for i in range(n)] + [f"theta_{i + 1}" for i in range(n)] + ["S", "eigmin"]
    _write_rows(out, header, ([row[key] for key in header] for row in rows))


@app.command("certify")
def certify_cmd(
    model: Optional[Path] = ModelOption,
    builtin: Optional[str] = BuiltinOption,
    points: int = typer.Option(20, "--points", help="Grid points per axis"),
    sites: int = typer.Option(4, "--sites", help="Torus size for the irreducibility certificate"),
    export_json: bool = typer.Option(False, "--json", help="Machine-readable output"),
):
    """Run validators and the flux identities on an admissible grid."""
    try:
        spin_model, _ = _resolve(model, builtin)
    except SpinfluxError as exc:
        _fail(exc, export_json)

    if export_json:
        report = run_certification(spin_model, n_sites=sites, points_per_axis=points)
        print(json.dumps(report, indent=2))
    else:
        with progress_bar() as progress:
            progress.add_task(f"[cyan]Certifying {spin_model.name}...", total=None)
            report = run_certification(spin_model, n_sites=sites, points_per_axis=points)
        table = build_certification_table(spin_model.name)
        for check in report["checks"]:
            table.add_row(check["check"], format_verdict(check["passed"]), format_value(check["value"]),
                          format_value(check["threshold"]), check["note"])
        console.print(table)
        render_verdict("Certification Complete", report["passed"], [
            f"Grid points        : {report.get('grid_size', 0)}",
            f"Onsager residual   : {format_value(report.get('onsager_residual'))}",
            f"Min speed gap      : {format_value(report.get('speeds_min_gap'))} [dim](reported only)[/dim]",
        ])
    if not report["passed"]:
        raise typer.Exit(code=ValidationFailure.exit_code)


@app.command("pde")
def pde_cmd(
    model: Optional[Path] = ModelOption,
    builtin: Optional[str] = BuiltinOption,
    cells: int = typer.Option(1024, "--cells"),
    cfl: float = typer.Option(0.45, "--cfl"),
    t_end: float = typer.Option(..., "--t-end"),
    snapshots: int = typer.Option(10, "--snapshots"),
    initial: str = typer.Option(..., "--initial", help="const:v1,... or sine:m1,a1,..."),
    exact: bool = typer.Option(False, "--exact", help="Exact-summation fluxes even for built-ins"),
    out: Optional[Path] = typer.Option(None, "--out", help="CSV file (stdout when omitted)"),
):
    """Solve the hydrodynamic equations with the Rusanov scheme."""
    try:
        spin_model, reference = _resolve(model, builtin)
        profile = parse_profile(initial, spin_model.n_cons)
        if builtin is not None and not exact:
            flux = closed_form_evaluator(builtin, builtin_parameters(builtin))
        else:
            flux = ModelFluxEvaluator(spin_model)
        with progress_bar(disable=out is None) as progress:
            progress.add_task(f"[cyan]Integrating {reference} to t={t_end}...", total=None)
            trajectory = solve(flux, profile.to_profile(cells), t_end, cfl=cfl, n_snapshots=snapshots)
    except SpinfluxError as exc:
        _fail(exc)
    header = ["time", "x"] + [f"u_{i + 1}" for i in range(spin_model.n_cons)]
    _write_rows(out, header, trajectory.rows())
    if out:
        console.print(f"[green]✔[/green] {len(trajectory.snapshots)} snapshots, {trajectory.steps} steps -> {out}")


@app.command("simulate")
def simulate_cmd(
    model: Optional[Path] = ModelOption,
    builtin: Optional[str] = BuiltinOption,
    sites: int = typer.Option(..., "--sites"),
    t: float = typer.Option(..., "--t", help="Macroscopic time"),
    initial: str = typer.Option(..., "--initial"),
    block: str = typer.Option("sqrt", "--block", help="sqrt, power:<alpha> or an integer"),
    replicas: int = typer.Option(1, "--replicas"),
    seed: int = typer.Option(0, "--seed"),
    out: Optional[Path] = typer.Option(None, "--out", help="CSV file (stdout when omitted)"),
):
    """Kinetic Monte Carlo from local equilibrium, block-averaged at time t."""
    try:
        spin_model, _ = _resolve(model, builtin)
        profile = parse_profile(initial, spin_model.n_cons)
        l = block_size(block, sites)
        with progress_bar(disable=out is None) as progress:
            progress.add_task(f"[cyan]Simulating {replicas} replica(s) on {sites} sites...", total=None)
            configs = run_replicas(spin_model, profile, sites, t, replicas, seed)
        rows = []
        for k, config in enumerate(configs):
            averaged = block_average(config, l)
            rows.extend((k, float(x), *(float(v) for v in u)) for x, u in zip(averaged.centres, averaged.values))
    except SpinfluxError as exc:
        _fail(exc)
    header = ["replica", "x_cell"] + [f"u_{i + 1}" for i in range(spin_model.n_cons)]
    _write_rows(out, header, rows)


@app.command("converge")
def converge_cmd(
    experiment: Path = typer.Argument(..., help="Experiment document (JSON)"),
    rows_out: Optional[Path] = typer.Option(None, "--rows", help="Override the rows CSV path"),
    summary_out: Optional[Path] = typer.Option(None, "--summary", help="Override the summary JSON path"),
):
    """KMC against PDE over increasing lattice sizes."""
    try:
        spec = load_experiment(experiment)
        profile = parse_profile(spec.initial, spec.model.n_cons)
    except SpinfluxError as exc:
        _fail(exc)

    rows_path = rows_out or spec.rows_path
    summary_path = summary_out or spec.summary_path
    n = spec.model.n_cons
    header = ["N", "l", "replicas"] + [f"l1_u_{i + 1}" for i in range(n)] + [f"se_u_{i + 1}" for i in range(n)]
    written = []

    def flush(row) -> None:
        written.append([row.n_sites, row.block, row.replicas, *row.l1_error, *row.l1_stderr])
        if rows_path:
            _write_rows(rows_path, header, written)

    try:
        with progress_bar(disable=summary_path is None) as progress:
            progress.add_task(f"[cyan]Convergence study for {spec.model.name}...", total=None)
            result = run_convergence(spec, profile, on_row=flush)
    except SpinfluxError as exc:
        _fail(exc)

    summary = result.summary()
    if summary_path:
        Path(summary_path).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    else:
        print(json.dumps(summary, indent=2))
        return

    table = build_convergence_table(n)
    for row in result.rows:
        table.add_row(str(row.n_sites), str(row.block), str(row.replicas),
                      *(f"{e:.4f} ± {s:.4f}" for e, s in zip(row.l1_error, row.l1_stderr)))
    console.print(table)
    render_verdict("Convergence Complete", result.monotone_decrease, [
        f"Monotone decrease  : {result.monotone_decrease} [dim](engineering proxy)[/dim]",
        f"Entropy drop       : {result.entropy_drop:.3e}",
    ])


def main():
    app()


if __name__ == "__main__":
    main()
