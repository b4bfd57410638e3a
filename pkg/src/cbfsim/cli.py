"""Batch runner: execute seeded scenario runs (including gain / penetration
sweeps), emit per-run trace CSVs and a summary table, and gate on the result.

Exit codes: 0 success, 2 config error, 3 safety-violation count > 0,
4 feasibility failure (a CAV exhausted the window search or an infeasible
interval was not resolved within its tick).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .config import ConfigError, ScenarioConfig, SweepSpec, load
from .planner import WindowSearchError
from .sim import World

TICK_COLUMNS = ("time_s", "vehicle_id", "kind", "position_m", "speed_mps",
                "accel_mps2", "mode", "active_bound")
VEHICLE_COLUMNS = ("vehicle_id", "kind", "movement", "approach",
                   "entry_t_s", "cross_t_s", "dwell_s")
SUMMARY_COLUMNS = ("sweep_key", "sweep_value", "mean_dwell_s", "std_dwell_s",
                   "n_vehicles", "safety_violations")


@dataclass
class RunResult:
    sweep_key: str
    sweep_value: str
    seed: int
    dwells: List[float]
    safety_violations: int
    feasibility_failures: int


@dataclass
class BatchResult:
    runs: List[RunResult]
    summary: List[dict]
    trace_files: List[str]

    @property
    def total_safety_violations(self) -> int:
        return sum(r.safety_violations for r in self.runs)

    @property
    def total_feasibility_failures(self) -> int:
        return sum(r.feasibility_failures for r in self.runs)


def build_world(cfg: ScenarioConfig, seed: int, record_trace: bool = False) -> World:
    return World(
        topology=cfg.topology,
        schedules=cfg.schedules(),
        limits=cfg.limits,
        gains=cfg.gains,
        idm=cfg.idm,
        dt=cfg.dt_s,
        arrival_rate=cfg.arrival_rate_vph,
        cav_fraction=cfg.cav_fraction,
        right_turn_fraction=cfg.right_turn_fraction,
        spawn_speed=cfg.spawn_speed_mps,
        leader_policy=cfg.leader_accel_policy,
        seed=seed,
        record_trace=record_trace,
    )


def sweep_points(cfg: ScenarioConfig) -> List[Tuple[str, str, ScenarioConfig]]:
    """(sweep_key, sweep_value, config) for each point; a missing sweep is a
    single default point."""
    if cfg.sweep is None:
        return [("none", "default", cfg)]
    axis = cfg.sweep.axis
    points = []
    for value in cfg.sweep.values:
        if axis == "phi_per_s":
            gains = dataclasses.replace(cfg.gains, phi=float(value))
            point = dataclasses.replace(cfg, gains=gains, sweep=None)
            label = f"{float(value):g}"
        elif axis == "cav_fraction":
            point = dataclasses.replace(cfg, cav_fraction=float(value), sweep=None)
            label = f"{float(value):g}"
        else:  # gain_triples: [kappa_rear, kappa_cross, kappa_virtual]
            kr, kt, ki = (float(x) for x in value)
            gains = dataclasses.replace(cfg.gains, kappa_R=kr, kappa_T=kt,
                                        kappa_imag=ki)
            point = dataclasses.replace(cfg, gains=gains, sweep=None)
            label = f"kR={kr:g},kT={kt:g},kI={ki:g}"
        points.append((axis, label, point))
    return points


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def run_batch(cfg: ScenarioConfig, out_dir: Optional[str] = None) -> BatchResult:
    """Execute every (sweep point, seed) run; deterministic per seed."""
    record_trace = out_dir is not None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    runs: List[RunResult] = []
    trace_files: List[str] = []
    for key, label, point in sweep_points(cfg):
        for seed in point.seeds:
            world = build_world(point, seed, record_trace)
            failures = 0
            try:
                world.run(point.duration_s, point.spawn_until_s,
                          point.drain, point.max_time_s)
            except WindowSearchError:
                world.finalize_all()
                failures += 1
            failures += world.unresolved_infeasible
            violations = sum(world.violations.values())
            runs.append(RunResult(key, label, seed, world.dwell_times(),
                                  violations, failures))
            if out_dir is not None:
                stem = f"{key}_{label}_seed{seed}".replace(",", "_").replace("=", "")
                ticks_path = os.path.join(out_dir, f"{stem}_ticks.csv")
                _write_csv(ticks_path, TICK_COLUMNS, world.trace)
                veh_rows = []
                for rec in sorted(world.metrics.values(), key=lambda r: r.vid):
                    veh_rows.append((rec.vid, rec.kind.value, rec.movement.value,
                                     rec.corridor, rec.entry_t,
                                     "" if rec.cross_t is None else repr(rec.cross_t),
                                     "" if rec.dwell is None else repr(rec.dwell)))
                veh_path = os.path.join(out_dir, f"{stem}_vehicles.csv")
                _write_csv(veh_path, VEHICLE_COLUMNS, veh_rows)
                trace_files.extend([ticks_path, veh_path])

    summary: List[dict] = []
    for key, label, _ in sweep_points(cfg):
        point_runs = [r for r in runs if r.sweep_key == key and r.sweep_value == label]
        means = [float(np.mean(r.dwells)) for r in point_runs if r.dwells]
        if not means:
            continue  # zero-duration / empty runs contribute no summary row
        summary.append({
            "sweep_key": key,
            "sweep_value": label,
            "mean_dwell_s": float(np.mean(means)),
            "std_dwell_s": float(np.std(means, ddof=1)) if len(means) > 1 else 0.0,
            "n_vehicles": sum(len(r.dwells) for r in point_runs),
            "safety_violations": sum(r.safety_violations for r in point_runs),
        })
    if out_dir is not None:
        _write_csv(os.path.join(out_dir, "summary.csv"), SUMMARY_COLUMNS,
                   [[row[c] for c in SUMMARY_COLUMNS] for row in summary])
    return BatchResult(runs, summary, trace_files)


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="cbfsim",
                                     description="Mixed-traffic intersection batch runner")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute a scenario config")
    run_p.add_argument("config", help="YAML scenario file")
    run_p.add_argument("--out", default=None, help="directory for trace/summary CSVs")
    run_p.add_argument("--seeds", type=int, default=None,
                       help="override the seed list with range(N)")
    run_p.add_argument("--dt", type=float, default=None, help="override the time step")
    args = parser.parse_args(argv)

    try:
        cfg = load(args.config)
        if args.seeds is not None:
            cfg = dataclasses.replace(cfg, seeds=list(range(args.seeds)))
        if args.dt is not None:
            cfg = dataclasses.replace(cfg, dt_s=args.dt)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    result = run_batch(cfg, args.out)
    for row in result.summary:
        print("{sweep_key}={sweep_value}: mean dwell {mean_dwell_s:.2f} s "
              "(std {std_dwell_s:.2f}, n={n_vehicles}, violations={safety_violations})"
              .format(**row))
    if result.total_feasibility_failures > 0:
        print(f"feasibility failures: {result.total_feasibility_failures}",
              file=sys.stderr)
        return 4
    if result.total_safety_violations > 0:
        print(f"safety violations: {result.total_safety_violations}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
