"""Command-line experiment runner.

Subcommands
-----------
``evolve --config <path>``
    Run a configured flow; writes ``trajectory.csv``, ``manifest.json`` and
    optional ``snapshots/``.  ``--config`` also accepts the name of a shipped
    scenario (see ``halfflow.config.scenario_names``).
``check --suite <identity|geometry|crossform> --M <int> [--seed <int>]``
    Run a named check suite; prints one JSON report with per-check residuals.
``calibrate --s <list> --M <list>``
    Write ``calibration.json`` for the requested orders and grid sizes.

Exit codes: 0 ok, 2 config error, 3 numerical failure (blow-up or tube
exit), 4 check failure.  All output files are written atomically
(write-then-rename) with fixed 17-significant-digit float formatting, so a
rerun with the same config and seed reproduces ``trajectory.csv``
bit-exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ExperimentConfig,
    build_manifold,
    load_config,
    scenario_names,
    scenario_text,
)
from .checks import run_suite
from .flow import (
    ConstraintBlowup,
    NonFiniteState,
    SolverOptions,
    evolve,
    initial_concentrated_bump,
    initial_great_circle,
    initial_projected_perturbation,
    initial_torus_loop,
)
from .grid import build_grid
from .manifolds import NotAHypersurface, OutsideTube
from .offdiag import calibration_entry

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4

_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FMT % float(x)


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _make_initial(cfg: ExperimentConfig, grid, manifold):
    spec = dict(cfg.initial)
    gen = spec.pop("generator")
    if gen == "projected_perturbation":
        return initial_projected_perturbation(grid, manifold, **spec)
    if gen == "great_circle":
        return initial_great_circle(grid, manifold, **spec)
    if gen == "torus_loop":
        return initial_torus_loop(grid, manifold, **spec)
    if gen == "concentrated_bump":
        return initial_concentrated_bump(grid, manifold, **spec)
    raise ConfigError("initial.generator", f"unknown generator {gen!r}")


def _trajectory_csv(cfg: ExperimentConfig, trajectory) -> str:
    radii = [float(r) for r in cfg.radii]
    first = trajectory[0][1]
    n = len(first.mean_point)
    cols = ["t", "energy", "constraint_violation", "harmonic_residual"]
    cols += [f"eps_R_{r:g}" for r in radii]
    cols += [f"mean_{i}" for i in range(n)]
    if first.formulation_gaps:
        cols += [f"gap_{tag}" for tag in sorted(first.formulation_gaps)]
    lines = [",".join(cols)]
    for _, rec in trajectory:
        row = [
            _fmt(rec.t),
            _fmt(rec.energy),
            _fmt(rec.constraint_violation),
            _fmt(rec.harmonic_residual),
        ]
        row += [_fmt(rec.local_energy_sup[r]) for r in radii]
        row += [_fmt(v) for v in rec.mean_point]
        if rec.formulation_gaps:
            row += [_fmt(rec.formulation_gaps[tag]) for tag in sorted(rec.formulation_gaps)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _snapshot_csv(grid, u) -> str:
    n = u.values.shape[1]
    lines = ["angle," + ",".join(f"u_{i}" for i in range(n))]
    for j in range(grid.M):
        lines.append(
            ",".join([_fmt(grid.nodes[j])] + [_fmt(v) for v in u.values[j]])
        )
    return "\n".join(lines) + "\n"


def _load_calibration_file(cfg: ExperimentConfig):
    """Calibration table lookup with on-the-fly fallback."""
    if cfg.calibration_file:
        path = Path(cfg.calibration_file)
        if path.is_file():
            table = json.loads(path.read_text())
            for entry in table.get("entries", []):
                if entry["s"] == 0.5 and entry["M"] == cfg.M:
                    return entry, "file"
        return calibration_entry(0.5, cfg.M), "on-the-fly (calibration file missing)"
    return calibration_entry(0.5, cfg.M), "on-the-fly"


def run_evolve(cfg: ExperimentConfig) -> int:
    out_dir = Path(os.environ.get("HALFFLOW_OUTPUT_DIR", cfg.output_dir))
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = build_grid(cfg.M)
    manifold = build_manifold(cfg)
    u0 = _make_initial(cfg, grid, manifold)
    calibration, calibration_source = _load_calibration_file(cfg)

    t0 = time.perf_counter()
    trajectory = evolve(
        u0,
        manifold,
        cfg.formulation,
        cfg.solver,
        diagnostics_stride=cfg.diagnostics_stride,
        radii=cfg.radii,
        gap_formulations=cfg.gap_formulations,
    )
    wall = time.perf_counter() - t0

    _atomic_write(out_dir / "trajectory.csv", _trajectory_csv(cfg, trajectory))

    if cfg.snapshot_times:
        snap_dir = out_dir / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for target in cfg.snapshot_times:
            state = min(trajectory, key=lambda sr: abs(sr[0].t - target))[0]
            _atomic_write(
                snap_dir / f"u_t{target:g}.csv", _snapshot_csv(grid, state.u)
            )

    manifest = {
        "tool": "halfflow",
        "version": __version__,
        "config": cfg.raw,
        "calibration": calibration,
        "calibration_source": calibration_source,
        "columns": _trajectory_csv(cfg, trajectory[:1]).splitlines()[0].split(","),
        "records": len(trajectory),
        "wall_time_seconds": wall,
    }
    _atomic_write(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {out_dir / 'trajectory.csv'} ({len(trajectory)} records)")
    return EXIT_OK


def run_check(suite: str, M: int, seed: int) -> int:
    results = run_suite(suite, M=M, seed=seed)
    report = {
        "suite": suite,
        "M": M,
        "seed": seed,
        "checks": [r.as_dict() for r in results],
        "passed": all(r.passed for r in results),
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["passed"] else EXIT_CHECK


def run_calibrate(s_values, M_values, output: str) -> int:
    entries = [calibration_entry(s, M) for s in s_values for M in M_values]
    table = {"tool": "halfflow", "version": __version__, "entries": entries}
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, json.dumps(table, indent=2) + "\n")
    print(f"wrote {path} ({len(entries)} entries)")
    return EXIT_OK


def _resolve_config(arg: str) -> str:
    path = Path(arg)
    if path.is_file():
        return path.read_text()
    if arg in scenario_names():
        return scenario_text(arg)
    raise ConfigError("config", f"no config file or shipped scenario named {arg!r}")


def _float_list(text: str):
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text: str):
    return [int(t) for t in text.split(",") if t.strip()]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="halfflow",
        description="half-harmonic gradient flow experiments on the circle",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_evolve = sub.add_parser("evolve", help="run a configured flow")
    p_evolve.add_argument(
        "--config", required=True, help="config file path or shipped scenario name"
    )

    p_check = sub.add_parser("check", help="run a named check suite")
    p_check.add_argument(
        "--suite", required=True, choices=["identity", "geometry", "crossform"]
    )
    p_check.add_argument("--M", type=int, default=64)
    p_check.add_argument("--seed", type=int, default=0)

    p_cal = sub.add_parser("calibrate", help="write a calibration table")
    p_cal.add_argument("--s", required=True, help="comma-separated orders, e.g. 0.5")
    p_cal.add_argument("--M", required=True, help="comma-separated grid sizes")
    p_cal.add_argument("--output", default="calibration.json")

    args = parser.parse_args(argv)
    try:
        if args.command == "evolve":
            cfg = load_config(_resolve_config(args.config))
            return run_evolve(cfg)
        if args.command == "check":
            return run_check(args.suite, args.M, args.seed)
        if args.command == "calibrate":
            return run_calibrate(_float_list(args.s), _int_list(args.M), args.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OutsideTube, ConstraintBlowup, NonFiniteState, NotAHypersurface) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
