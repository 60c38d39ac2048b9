"""Multi-run benchmark orchestration with deterministic report export.

Simulated quantities (exploration time, path length, coverage, sample
counts) go into byte-stable CSV files; wall-clock computation times are
real measurements and are written to a separate timings file that is not
part of the reproducible report surface.
"""
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .explorer import (ExplorationState, ExplorerConfig, PlannerMode,
                       RunMetrics, explore_step, run_exploration)
from .grid import VoxelState, compute_esdf
from .history import HistoryGraph, compute_potential, record_pose
from .sensor import Pose


@dataclass
class BenchmarkReport:
    records: list = field(default_factory=list)   # (run_id, RunMetrics)
    aggregates: dict = field(default_factory=dict)


def _f(x):
    """Stable float formatting for report files."""
    return repr(float(x))


def _quantiles(values):
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return {"min": float("nan"), "q1": float("nan"),
                "median": float("nan"), "q3": float("nan"),
                "max": float("nan")}
    q1, med, q3 = np.percentile(v, [25.0, 50.0, 75.0])
    return {"min": float(v[0]), "q1": float(q1), "median": float(med),
            "q3": float(q3), "max": float(v[-1])}


def run_single(scenario, mode, seed, start_index, cfg):
    """One seeded exploration run; failures become a flagged record instead
    of propagating."""
    run_cfg = replace(cfg, mode=mode)
    rng = np.random.default_rng(seed)
    try:
        metrics, _ = run_exploration(scenario, run_cfg, rng, start_index)
    except Exception as exc:  # a failed run must not abort the batch
        metrics = RunMetrics(seed=seed, mode=mode.value,
                             scenario=scenario.name, start_index=start_index,
                             failure=True,
                             failure_reason=f"{type(exc).__name__}: {exc}")
    metrics.seed = seed
    return metrics


def compute_aggregates(records):
    """Quantile tables keyed by (scenario, mode); recomputable from the raw
    records."""
    groups = {}
    for run_id, m in records:
        groups.setdefault((m.scenario, m.mode), []).append(m)
    out = {}
    for key, ms in sorted(groups.items()):
        ok = [m for m in ms if not m.failure]
        out[key] = {
            "exploration_time": _quantiles(
                [m.exploration_time for m in ok]),
            "path_length": _quantiles(
                [m.total_path_length for m in ok]),
            "max_step_computation": _quantiles(
                [max(m.computation_times) for m in ok
                 if m.computation_times]),
            "n_runs": len(ms),
            "n_failed": len(ms) - len(ok),
        }
    return out


def run_benchmark(scenarios, modes, n_runs, base_seed, cfg=None):
    """Run every (scenario, mode, i < n_runs) combination with
    seed = base_seed + i and start pose cycling over the scenario's starts."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if cfg is None:
        cfg = ExplorerConfig()
    records = []
    for scenario in scenarios:
        for mode in modes:
            for i in range(n_runs):
                metrics = run_single(scenario, mode, base_seed + i, i, cfg)
                run_id = f"{scenario.name}_{mode.value}_{i:03d}"
                records.append((run_id, metrics))
    records.sort(key=lambda rm: rm[0])
    return BenchmarkReport(records, compute_aggregates(records))


def export_report(report, out_dir):
    """Write runs / aggregates / coverage / per-step sample CSVs (all
    byte-stable) plus timings.csv (wall clock, excluded from determinism
    comparisons). Returns the list of files written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def open_out(name):
        path = os.path.join(out_dir, name)
        written.append(path)
        return open(path, "w")

    with open_out("runs.csv") as f:
        f.write("run_id,scenario,mode,seed,start_index,finished,failure,"
                "failure_reason,exploration_time,path_length,final_coverage,"
                "nbv_count,samples_total,tier1,tier2,tier3,"
                "clearance_violations\n")
        for run_id, m in report.records:
            reason = m.failure_reason.replace(",", ";").replace("\n", " ")
            f.write(",".join([
                run_id, m.scenario, m.mode, str(m.seed), str(m.start_index),
                str(int(m.finished)), str(int(m.failure)), reason,
                _f(m.exploration_time), _f(m.total_path_length),
                _f(m.final_coverage), str(m.nbv_count),
                str(sum(m.samples_per_step)),
                str(m.tier_counts.get(1, 0)), str(m.tier_counts.get(2, 0)),
                str(m.tier_counts.get(3, 0)),
                str(m.clearance_violations)]) + "\n")

    with open_out("aggregates.csv") as f:
        f.write("scenario,mode,metric,min,q1,median,q3,max\n")
        for (scn, mode), agg in sorted(report.aggregates.items()):
            for metric in ("exploration_time", "path_length"):
                q = agg[metric]
                f.write(",".join([scn, mode, metric, _f(q["min"]),
                                  _f(q["q1"]), _f(q["median"]), _f(q["q3"]),
                                  _f(q["max"])]) + "\n")

    with open_out("coverage.csv") as f:
        f.write("run_id,scenario,mode,time,coverage\n")
        for run_id, m in report.records:
            for t, c in m.coverage_curve:
                f.write(f"{run_id},{m.scenario},{m.mode},{_f(t)},{_f(c)}\n")

    with open_out("samples.csv") as f:
        f.write("run_id,scenario,mode,step,samples\n")
        for run_id, m in report.records:
            for step, s in enumerate(m.samples_per_step):
                f.write(f"{run_id},{m.scenario},{m.mode},{step},{s}\n")

    with open_out("timings.csv") as f:
        f.write("run_id,scenario,mode,metric,value\n")
        for run_id, m in report.records:
            total = sum(m.computation_times)
            worst = max(m.computation_times) if m.computation_times else 0.0
            f.write(f"{run_id},{m.scenario},{m.mode},"
                    f"total_computation,{_f(total)}\n")
            f.write(f"{run_id},{m.scenario},{m.mode},"
                    f"max_step_computation,{_f(worst)}\n")
        for (scn, mode), agg in sorted(report.aggregates.items()):
            q = agg["max_step_computation"]
            for k in ("min", "q1", "median", "q3", "max"):
                f.write(f"agg,{scn},{mode},max_step_computation_{k},"
                        f"{_f(q[k])}\n")
    return written


def export_plots(report, out_dir):
    """CSV series for external plotting: per-run coverage curves and the
    quantile table."""
    if not report.records:
        raise ValueError("empty report")
    return export_report(report, out_dir)


def setup_deadend_state(scenario, cfg):
    """Planner state as if the corridor of a dead-end scenario were fully
    explored: everything is known except the chamber volume, and the history
    graph traces the corridor centerline with fresh potentials."""
    truth = scenario.truth
    explored = truth.copy()
    res = truth.resolution
    ixm = int(round((scenario.meta["mouth_x"] - truth.origin[0]) / res))
    y0, y1 = scenario.meta["chamber_y"]
    iy0 = int(round((y0 - truth.origin[1]) / res))
    iy1 = int(round((y1 - truth.origin[1]) / res))
    explored.cells[ixm:, iy0:iy1, :] = VoxelState.UNKNOWN
    esdf = compute_esdf(explored, cfg.esdf_d_max)
    graph = HistoryGraph()
    path = scenario.meta["path"]
    for a, b in zip(path[:-1], path[1:]):
        seg = float(np.linalg.norm(b - a))
        n = max(int(math.ceil(seg / (0.5 * cfg.history.d_hist))), 1)
        for k in range(n + 1):
            record_pose(graph, a + (b - a) * (k / n), explored, esdf,
                        cfg.history)
    for node in graph.nodes.values():
        node.potential = compute_potential(explored, node.position,
                                           cfg.history.rho_bfs)
    start = scenario.starts[0]
    pose = Pose(start.position.copy(), start.yaw)
    return ExplorationState(truth, explored, esdf, graph, pose)


def deadend_trial(scenario, mode, cfg, seed=0):
    """One planning call from the closed end of a fully explored dead-end
    corridor; returns the step outcome and its wall time."""
    state = setup_deadend_state(scenario, cfg)
    run_cfg = replace(cfg, mode=mode)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    outcome = explore_step(state, run_cfg, rng)
    wall = time.perf_counter() - t0
    return outcome, wall


def parse_modes(text):
    modes = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        modes.append(PlannerMode(tok))
    if not modes:
        raise ValueError("no modes given")
    return modes
