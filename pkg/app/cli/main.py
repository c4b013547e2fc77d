"""``qkerr``: sweeps, derived parameters and effective-model checks from the terminal."""
import math
from pathlib import Path
from typing import NoReturn, Optional, Sequence

import typer
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from app.core.config import APP_NAME, APP_VERSION, ConfigError, RunConfig, load_config, resolve_workers
from app.core.device import GateSolution, RegimeError, derive, quality_factor, solve_gate_parameters
from app.core.dynamics import ToleranceError
from app.core.experiments import HEATMAP_ETA_GRID_US
from app.core.logging_util import setup_logging, teardown_logging
from app.core.runner import RunOutcome, SweepRunner

EXIT_CONFIG = 1
EXIT_TOLERANCE = 2

app = typer.Typer(
    name="qkerr",
    help=f"{APP_NAME}: qutrit-mediated cross-Kerr gate and entangled coherent state simulations.",
    add_completion=False,
    no_args_is_help=True,
)
console = Console()

CONFIG_OPTION = typer.Option(None, "--config", help="dotenv-style run configuration file.")
OUT_OPTION = typer.Option(None, "--out", help="Output directory (CSV, metadata, logs).")
PLOT_OPTION = typer.Option(False, "--plot", help="Also write an SVG figure.")
WORKERS_OPTION = typer.Option(None, "--workers", help="Worker processes for the sweep.")
DT_OPTION = typer.Option(None, "--dt", help="Integrator step in ns (default: 64 steps per fastest period).")
DIM_A_OPTION = typer.Option(None, "--dim-a", help="Fock truncation of resonator a.")
DIM_B_OPTION = typer.Option(None, "--dim-b", help="Fock truncation of resonator b.")


def _fail(message: str, code: int) -> NoReturn:
    console.print(f"[bold red]{message}[/bold red]")
    raise typer.Exit(code=code)


def _resolve(
    experiment: Optional[str],
    config_path: Optional[Path],
    *,
    out: Optional[Path] = None,
    dt: Optional[float] = None,
    dim_a: Optional[int] = None,
    dim_b: Optional[int] = None,
) -> RunConfig:
    try:
        config = load_config(config_path)
        return config.with_overrides(experiment=experiment, out_dir=out, dt_ns=dt, dim_a=dim_a, dim_b=dim_b)
    except (ConfigError, RegimeError) as exc:
        _fail(f"Configuration error: {exc}", EXIT_CONFIG)


def _fmt(value: object) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6g}"
    return str(value)


def _render(outcome: RunOutcome) -> None:
    if outcome.rows:
        table = Table(title=f"{outcome.experiment} ({outcome.operation_id})")
        columns = list(outcome.rows[0])
        for column in columns:
            table.add_column(column, justify="right" if column != "status" else "left")
        for row in outcome.rows:
            style = None if row.get("status") == "ok" else "red"
            table.add_row(*(_fmt(row.get(column)) for column in columns), style=style)
        console.print(table)
    for key, value in outcome.extra.items():
        console.print(f"{key}: {_fmt(value)}")
    summary = (
        f"CSV: {outcome.csv_path}\nMetadata: {outcome.manifest_path}"
        + (f"\nFigure: {outcome.plot_path}" if outcome.plot_path else "")
        + f"\nRows: {len(outcome.rows)}  failed: {outcome.failed_rows}  wall: {outcome.wall_seconds:.1f} s"
    )
    console.print(Panel(summary, title="Run complete" if outcome.ok else "Run finished with failures"))


def _run(
    experiment: str,
    config_path: Optional[Path],
    out: Optional[Path],
    plot: bool,
    workers: Optional[int],
    dt: Optional[float],
    dim_a: Optional[int],
    dim_b: Optional[int],
) -> None:
    config = _resolve(experiment, config_path, out=out, dt=dt, dim_a=dim_a, dim_b=dim_b)
    try:
        worker_count = resolve_workers(workers, config)
    except ConfigError as exc:
        _fail(f"Configuration error: {exc}", EXIT_CONFIG)

    logger = setup_logging(config.out_dir / "logs")
    runner = SweepRunner(
        config,
        out_dir=config.out_dir,
        workers=worker_count,
        plot=plot or config.plot,
        logger=logger.getChild("runner"),
    )
    try:
        outcome = runner.run(experiment)
    except (ConfigError, RegimeError) as exc:
        _fail(f"Configuration error: {exc}", EXIT_CONFIG)
    except ToleranceError as exc:
        _fail(f"Numerical tolerance failure: {exc}", EXIT_TOLERANCE)
    except OSError as exc:
        _fail(f"I/O error: {exc}", EXIT_CONFIG)
    finally:
        teardown_logging()

    _render(outcome)
    if not outcome.ok:
        raise typer.Exit(code=EXIT_TOLERANCE)


def _q_range(omega_ghz: float, etas: Sequence[float]) -> str:
    values = [quality_factor(omega_ghz, eta) for eta in etas]
    return f"{min(values):.3g} .. {max(values):.3g}"


@app.command()
def params(config_path: Optional[Path] = CONFIG_OPTION) -> None:
    """Print derived couplings, protocol times and regime checks."""

    config = _resolve(None, config_path)
    device = config.device_params()
    derived = derive(device)
    try:
        solution: Optional[GateSolution] = solve_gate_parameters(
            config.g_mhz, config.delta_a_ghz, config.delta_b_ghz, config.k
        )
    except RegimeError:
        solution = None

    table = Table(title=f"{APP_NAME} v{APP_VERSION}: derived parameters")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    table.add_column("unit")
    etas = config.eta_list_us or HEATMAP_ETA_GRID_US
    entries = [
        ("omega_eg", device.omega_eg, "GHz"),
        ("omega_fe", device.omega_fe, "GHz"),
        ("mu", device.mu, "MHz"),
        ("g_ab", device.g_ab, "MHz"),
        ("lambda", derived.lambda_mhz, "MHz"),
        ("Delta", derived.Delta_mhz, "MHz"),
        ("chi", derived.chi_mhz, "MHz"),
        ("theta", derived.theta_mhz, "MHz"),
        ("t_gate", derived.t_gate_us * 1e3, "ns"),
        ("t_cat", derived.t_cat_us, "us"),
        ("lambda (gate solution)", solution.lambda_mhz if solution else None, "MHz"),
        ("mu (gate solution)", solution.mu_mhz if solution else None, "MHz"),
        ("t_gate (gate solution)", solution.t_gate_us * 1e3 if solution else None, "ns"),
        ("Q_a (eta)", quality_factor(config.omega_a_ghz, config.eta_us), ""),
        ("Q_b (eta)", quality_factor(config.omega_b_ghz, config.eta_us), ""),
        ("Q_a over eta grid", _q_range(config.omega_a_ghz, etas), ""),
        ("Q_b over eta grid", _q_range(config.omega_b_ghz, etas), ""),
    ]
    for name, value, unit in entries:
        table.add_row(name, _fmt(value), unit)
    console.print(table)
    for message in derived.warnings:
        console.print(f"[yellow]warning:[/yellow] {message}")


@app.command("gate-sweep")
def gate_sweep(
    config_path: Optional[Path] = CONFIG_OPTION,
    out: Optional[Path] = OUT_OPTION,
    plot: bool = PLOT_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    dt: Optional[float] = DT_OPTION,
    dim_a: Optional[int] = DIM_A_OPTION,
    dim_b: Optional[int] = DIM_B_OPTION,
) -> None:
    """Controlled-phase gate fidelity over the delta_b grid, with and without decoherence."""

    _run("gate", config_path, out, plot, workers, dt, dim_a, dim_b)


@app.command("gate-heatmap")
def gate_heatmap(
    config_path: Optional[Path] = CONFIG_OPTION,
    out: Optional[Path] = OUT_OPTION,
    plot: bool = PLOT_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    dt: Optional[float] = DT_OPTION,
    dim_a: Optional[int] = DIM_A_OPTION,
    dim_b: Optional[int] = DIM_B_OPTION,
) -> None:
    """Gate fidelity over qutrit (gamma) and resonator (eta) decoherence times."""

    _run("heatmap", config_path, out, plot, workers, dt, dim_a, dim_b)


@app.command("cat-sweep")
def cat_sweep(
    config_path: Optional[Path] = CONFIG_OPTION,
    out: Optional[Path] = OUT_OPTION,
    plot: bool = PLOT_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    dt: Optional[float] = DT_OPTION,
    dim_a: Optional[int] = DIM_A_OPTION,
    dim_b: Optional[int] = DIM_B_OPTION,
) -> None:
    """Entangled coherent state fidelity over D = delta_b/mu and the target truncation m."""

    _run("cat", config_path, out, plot, workers, dt, dim_a, dim_b)


@app.command("validate-effective")
def validate_effective(
    config_path: Optional[Path] = CONFIG_OPTION,
    out: Optional[Path] = OUT_OPTION,
    plot: bool = PLOT_OPTION,
    workers: Optional[int] = WORKERS_OPTION,
    dt: Optional[float] = DT_OPTION,
    dim_a: Optional[int] = DIM_A_OPTION,
    dim_b: Optional[int] = DIM_B_OPTION,
) -> None:
    """State deficits between adjacent Hamiltonians of the effective hierarchy."""

    _run("validate", config_path, out, plot, workers, dt, dim_a, dim_b)


def main() -> None:
    app()


if __name__ == "__main__":
    main()
