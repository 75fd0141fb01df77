"""
Restenosis Core - Command line entry point
run | sweep | mesh-dump
"""
import argparse
import sys
from pathlib import Path

from rich.console import Console
from rich.table import Table

from core.config import load_runtime_config
from core.errors import ConfigError, RestenosisError, exit_code_for
from core.output import (
    derive_fields,
    neointimal_thickness,
    write_fields,
    write_mesh_vtk,
    write_thickness_profile,
    write_timeseries,
)
from core.scenario_config import SimulationConfig, parse_config
from core.scenarios import build_mesh, build_scenario
from core.solver import run
from core.store import ResultStore
from core.sweep import sweep
from utils.logger_config import get_logger, setup_logging

logger = get_logger()
console = Console()
err_console = Console(stderr=True)


def _load_config(path: str) -> SimulationConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    return parse_config(text)


def _with_cli_overrides(config: SimulationConfig, args: argparse.Namespace) -> SimulationConfig:
    for flag, name in (("dt", "time.dt"), ("t_end", "time.t_end"), ("scheme", "time.scheme")):
        value = getattr(args, flag, None)
        if value is not None:
            config = config.with_override(name, value)
    return config


def _output_dir(config: SimulationConfig, args: argparse.Namespace) -> Path:
    runtime = load_runtime_config()
    if getattr(args, "output_dir", None):
        return Path(args.output_dir)
    directory = Path(config.output.directory)
    return directory if directory.is_absolute() else Path(runtime.output_root) / directory


# ── Subcommands ──
def cmd_run(args: argparse.Namespace) -> int:
    config = _with_cli_overrides(_load_config(args.config), args)
    out = _output_dir(config, args)
    scenario = build_scenario(config)

    def dump(state, record):
        write_fields(scenario.mesh, state, derive_fields(scenario, state), out / f"fields_t{state.t:08.2f}.vtk")
        record.fields = None

    records = run(scenario, on_fields=dump)
    write_timeseries(records, out / "timeseries.csv")
    if len(scenario.profile_nodes):
        profile = neointimal_thickness(records, scenario.mesh, scenario.profile_nodes)
        write_thickness_profile(profile, out / "neointima.csv")
    run_id = ResultStore(load_runtime_config().results_db).save_run(
        config.label or Path(args.config).stem, str(config.scenario), records
    )

    steps = records[1:]
    flags = sorted({f for r in steps for f in r.diagnostics["flags"]})
    table = Table(title=f"run {run_id} ({config.scenario}, {config.time.scheme})")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    table.add_row("steps", str(len(steps)))
    table.add_row("t end [days]", f"{records[-1].t:g}")
    table.add_row("Newton iterations", str(sum(r.diagnostics["iterations"] for r in steps)))
    table.add_row("linear solves", str(sum(r.diagnostics["linear_solves"] for r in steps)))
    table.add_row("wall time [s]", f"{sum(r.diagnostics['wall_time'] for r in steps):.2f}")
    table.add_row("Jg at monitor", f"{records[-1].monitor['Jg']:.6g}")
    table.add_row("u_Z at monitor [mm]", f"{records[-1].monitor['u_Z']:.6g}")
    table.add_row("flags", ", ".join(flags) or "-")
    table.add_row("output", str(out))
    console.print(table)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _with_cli_overrides(_load_config(args.config), args)
    out = _output_dir(config, args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values needs at least one value")
    workers = args.workers or load_runtime_config().sweep_workers
    result = sweep(config, args.param, values, out, ResultStore(load_runtime_config().results_db), workers=workers)

    table = Table(title=f"sweep {args.param}")
    table.add_column("run")
    table.add_column("run id")
    table.add_column("Jg end", justify="right")
    table.add_column("u_Z end [mm]", justify="right")
    table.add_column("wall time [s]", justify="right")
    for label, run_id in zip(result.labels, result.run_ids):
        recs = result.records[label]
        wall = sum(r.diagnostics["wall_time"] for r in recs)
        table.add_row(label, run_id, f"{recs[-1].monitor['Jg']:.6g}", f"{recs[-1].monitor['u_Z']:.6g}", f"{wall:.2f}")
    console.print(table)
    console.print(f"combined: {result.combined_csv}")
    return 0


def cmd_mesh_dump(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    mesh = build_mesh(config)
    path = Path(args.output) if args.output else _output_dir(config, args) / "mesh.vtk"
    write_mesh_vtk(mesh, path)

    table = Table(title=f"mesh ({config.scenario})")
    table.add_column("item")
    table.add_column("count", justify="right")
    table.add_row("nodes", str(mesh.n_nodes))
    table.add_row("elements", str(mesh.n_elements))
    for name in sorted(mesh.node_sets):
        table.add_row(f"node set {name}", str(len(mesh.node_set(name))))
    for name in sorted(mesh.surface_patches):
        table.add_row(f"patch {name}", str(len(mesh.patch(name))))
    console.print(table)
    console.print(f"written: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restenosis", description="In-stent restenosis growth simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_time_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--dt", type=float, help="time step [days]")
        p.add_argument("--t-end", dest="t_end", type=float, help="end time [days]")
        p.add_argument("--scheme", choices=["monolithic", "staggered"])
        p.add_argument("--output-dir", dest="output_dir")

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("config")
    add_time_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a scenario once per parameter value")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True, help="dotted name, e.g. structural.kappa")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--workers", type=int)
    add_time_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_mesh = sub.add_parser("mesh-dump", help="write the reference mesh as VTK")
    p_mesh.add_argument("config")
    p_mesh.add_argument("--output")
    p_mesh.set_defaults(func=cmd_mesh_dump)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    runtime = load_runtime_config()
    setup_logging(runtime.log_level, log_file=runtime.log_file or None)
    try:
        return args.func(args)
    except RestenosisError as e:
        logger.error(f"{e.category}: {e}")
        err_console.print(f"[bold red]{e.category}[/]: {e}", highlight=False)
        return exit_code_for(e)
    except KeyboardInterrupt:
        err_console.print("interrupted")
        return 130
    except Exception as e:
        logger.critical(f"System Crash: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
