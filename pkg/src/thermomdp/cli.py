"""Command-line entry point: ``thermomdp <command> [options]``.

Commands: simulate, build-mp, solve-mdp, plot, validate, print-config.

Exit codes: 0 success, 1 validation failed, 2 usage or configuration error,
3 infeasible schedule, 4 I/O error, 5 malformed input data.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import _jsonio
from .config import FIELD_TYPES, ConfigError, RunConfig, load_config
from .errors import InfeasibleWindowError, SchemaError, ThermoMdpError
from .markov import BinningSpec, build_matrix, load_matrix, save_matrix, validate_matrix, write_probs_csv
from .mdp import (
    MdpProblem,
    build_utility,
    load_solution,
    reactive_power,
    read_price_csv,
    save_solution,
    solve,
    synthetic_prices,
)
from .schedule import EnsembleError, default_template, read_trace, run_ensemble, template_from_gains
from .svg import heatmap_svg, trajectory_svg
from .thermal import load_building
from .weather import read_gains_csv

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_IO, EXIT_DATA = 0, 1, 2, 3, 4, 5
PLOT_KINDS = ("matrix-heatmap", "power-trajectory")

log = logging.getLogger("thermomdp")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _config_flags(p: argparse.ArgumentParser, names) -> None:
    for name in names:
        kind = FIELD_TYPES[name]
        flag = "--" + name.replace("_", "-")
        if kind is bool:
            p.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None)
        else:
            p.add_argument(flag, dest=name, type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermomdp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, help, config_fields=()):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", type=Path, help="INI configuration file")
        _config_flags(p, config_fields)
        return p

    scenario = [
        "building", "gains", "horizon_steps", "dt_hours", "window_steps", "lookahead_steps",
        "n_profiles", "master_seed", "weather_seed", "workers", "output_dir",
    ]  # fmt: skip
    binning = ["power_var", "n_temp_bins", "n_power_bins", "mode", "output_dir"]
    mdp = ["prices", "mdp_horizon", "mdp_dt_hours", "pf", "utility_weight", "include_p_star", "output_dir"]

    command("simulate", "simulate the occupancy ensemble and write traces", scenario)
    p = command("build-mp", "build the transition matrix from traces", binning)
    p.add_argument("--traces", type=Path, help="trace directory (default: <output_dir>/traces)")
    p = command("solve-mdp", "solve the controlled ensemble problem", mdp)
    p.add_argument("--matrix", type=Path, help="matrix file (default: <output_dir>/matrix.json)")
    p = command("plot", "render an SVG plot", ["output_dir"])
    p.add_argument("--kind", required=True, help=" or ".join(PLOT_KINDS))
    p.add_argument("--input", type=Path, required=True, help="matrix file or solution file")
    p.add_argument("--output", type=Path, help="SVG path (default: <output_dir>/<kind>.svg)")
    p = command("validate", "check a matrix file")
    p.add_argument("matrix", type=Path)
    command("print-config", "print the effective configuration", list(FIELD_TYPES))
    return ap


def _load(args) -> RunConfig:
    overrides = {k: getattr(args, k) for k in FIELD_TYPES if hasattr(args, k)}
    cfg = load_config(args.config, overrides)
    missing = cfg.missing_files()
    if missing:
        raise CliError(f"missing input file(s): {', '.join(missing)}", EXIT_USAGE)
    return cfg


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _template(cfg: RunConfig):
    if not cfg.gains:
        building = load_building(cfg.building) if cfg.building else None
        return default_template(
            cfg.horizon_steps, min(cfg.window_steps, cfg.horizon_steps), cfg.weather_seed,
            building, cfg.dt_hours, cfg.lookahead_steps,
        )  # fmt: skip
    if not cfg.building:
        raise CliError("a gains file needs a matching building file", EXIT_USAGE)
    building = load_building(cfg.building)
    E, ambient, draw = read_gains_csv(cfg.gains, building.n_states)
    return template_from_gains(
        building, E, ambient, draw, cfg.horizon_steps, min(cfg.window_steps, cfg.horizon_steps),
        cfg.dt_hours, cfg.lookahead_steps,
    )  # fmt: skip


def cmd_simulate(cfg: RunConfig) -> int:
    out = _out(cfg)
    template = _template(cfg)
    failures = []
    try:
        traces = run_ensemble(template, cfg.n_profiles, cfg.master_seed, cfg.workers)
    except EnsembleError as exc:
        traces, failures = exc.traces, exc.failures
    tdir = out / "traces"
    tdir.mkdir(exist_ok=True)
    digest = cfg.digest()
    rows = []
    for k, tr in enumerate(traces):
        name = f"profile_{k:03d}_{tr.profile_seed}.csv"
        tr.write(tdir / name, digest)
        rows.append(
            {
                "file": name,
                "profile_seed": tr.profile_seed,
                "energy_kwh": float(tr.d_H.sum() * tr.dt_hours),
                "relaxed_windows": list(tr.relaxed_windows),
                "comfort_violation": tr.comfort_violation(template.building, template.scenario(template.profile(tr.profile_seed)).comfort),
            }
        )
    summary = {
        "schema_version": _jsonio.SCHEMA_VERSION,
        "config_hash": digest,
        "n_profiles": len(traces),
        "total_energy_kwh": float(sum(r["energy_kwh"] for r in rows)),
        "n_relaxed_profiles": sum(1 for r in rows if r["relaxed_windows"]),
        "max_comfort_violation": max((r["comfort_violation"] for r in rows), default=0.0),
        "profiles": rows,
        "failures": [str(f) for f in failures],
    }
    _jsonio.dump(summary, out / "simulate_summary.json")
    print(
        f"simulated {len(traces)} profile(s), {summary['n_relaxed_profiles']} with relaxed windows, "
        f"max comfort violation {summary['max_comfort_violation']:.3g} degC, "
        f"total energy {summary['total_energy_kwh']:.3f} kWh"
    )
    for f in failures:
        print(f"failed: {f}", file=sys.stderr)
    return EXIT_INFEASIBLE if failures else EXIT_OK


def cmd_build_mp(cfg: RunConfig, trace_dir: Path | None) -> int:
    out = _out(cfg)
    trace_dir = trace_dir or out / "traces"
    files = sorted(trace_dir.glob("*.csv"))
    if not files:
        raise CliError(f"no trace CSV files in {trace_dir}", EXIT_IO)
    traces = [read_trace(f) for f in files]
    bins = BinningSpec(
        power_var=cfg.power_var, n_temp_bins=cfg.n_temp_bins, n_power_bins=cfg.n_power_bins, mode=cfg.mode
    )
    tm = build_matrix(traces, bins)
    save_matrix(tm, out / "matrix.json")
    write_probs_csv(tm, out / "matrix.csv")
    report = validate_matrix(tm)
    _jsonio.dump(report.to_dict(), out / "matrix_report.json")
    print(
        f"{tm.n_states} states from {len(traces)} trace(s), {tm.n_transitions} transitions; "
        f"density {report.density:.4f}, diagonal mass {report.diagonal_mass:.4f}, "
        f"{len(report.classes)} class(es), residual {report.column_residual:.2e}"
    )
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_solve_mdp(cfg: RunConfig, matrix_path: Path | None) -> int:
    out = _out(cfg)
    tm = load_matrix(matrix_path or out / "matrix.json")
    report = validate_matrix(tm)
    if not report.ok:
        raise CliError("matrix is invalid: " + "; ".join(report.problems), EXIT_INVALID)
    if tm.state_power is None:
        raise CliError("matrix file has no state_power; cannot price states", EXIT_DATA)
    T = cfg.mdp_horizon
    prices = read_price_csv(cfg.prices) if cfg.prices else synthetic_prices(T, cfg.mdp_dt_hours)
    if len(prices) < T:
        raise CliError(f"price series has {len(prices)} steps, horizon needs {T}", EXIT_DATA)
    visits = tm.counts.sum(axis=0).astype(float)
    rho0 = visits / visits.sum() if visits.sum() > 0 else np.full(tm.n_states, 1.0 / tm.n_states)
    prob = MdpProblem(
        P_bar=tm.probs,
        U=build_utility(prices[:T], tm.state_power, cfg.mdp_dt_hours, cfg.utility_weight),
        rho0=rho0,
        p_alpha=tm.state_power,
        q_alpha=reactive_power(tm.state_power, cfg.pf),
    )
    sol = solve(prob)
    extra = {"state_power": tm.state_power.tolist(), "prices": [float(v) for v in prices[:T]]}
    save_solution(sol, out / "solution.json", cfg.include_p_star, extra)
    print(f"solved {T} steps over {tm.n_states} states; objective {sol.objective:.6g}")
    return EXIT_OK


def cmd_plot(cfg: RunConfig, kind: str, src: Path, dest: Path | None) -> int:
    if kind not in PLOT_KINDS:
        raise CliError(f"unknown plot kind {kind!r}; choose {' or '.join(PLOT_KINDS)}", EXIT_USAGE)
    if kind == "matrix-heatmap":
        tm = load_matrix(src)
        svg = heatmap_svg(tm.probs, f"Transition matrix ({tm.n_states} states)")
    else:
        sol = load_solution(src)
        if "state_power" not in sol:
            raise CliError(f"{src}: solution has no state_power", EXIT_DATA)
        svg = trajectory_svg(np.asarray(sol["rho"]), np.asarray(sol["state_power"]))
    dest = dest or _out(cfg) / f"{kind}.svg"
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(svg)
    print(f"wrote {dest}")
    return EXIT_OK


def cmd_validate(path: Path) -> int:
    tm = load_matrix(path)
    report = validate_matrix(tm)
    print(f"states {report.n_states}")
    print(f"column residual {report.column_residual:.3e}")
    print(f"density {report.density:.6f}")
    print(f"diagonal mass {report.diagonal_mass:.6f}")
    print(f"classes {len(report.classes)} (absorbing {report.n_absorbing}), irreducible {report.irreducible}")
    for problem in report.problems:
        print(f"problem: {problem}")
    print("valid" if report.ok else "INVALID")
    return EXIT_OK if report.ok else EXIT_INVALID


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            return cmd_validate(args.matrix)
        cfg = _load(args)
        if args.command == "print-config":
            sys.stdout.write(cfg.to_ini())
            return EXIT_OK
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "build-mp":
            return cmd_build_mp(cfg, args.traces)
        if args.command == "solve-mdp":
            return cmd_solve_mdp(cfg, args.matrix)
        return cmd_plot(cfg, args.kind, args.input, args.output)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleWindowError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ThermoMdpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
