"""Command-line interface: single runs, benchmark batches, the dead-end
comparison, and map re-export from a recorded run."""
import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .bench import deadend_trial, export_report, parse_modes, run_benchmark
from .errors import NbvxError, ScenarioParseError
from .explorer import ExplorerConfig, PlannerMode, run_exploration
from .scenario import generate_deadend, load_bundled, load_scenario


def _resolve_scenario(name):
    if os.path.exists(name):
        return load_scenario(name)
    return load_bundled(name)


def _make_config(mode=None, vmax=None):
    cfg = ExplorerConfig()
    if mode is not None:
        cfg.mode = mode
    if vmax is not None:
        cfg.limits = replace(cfg.limits, v_max=float(vmax))
    return cfg


def _fmt(x):
    return repr(float(x))


def _write_run_outputs(out_dir, metrics, state, params):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "params.txt"), "w") as f:
        for k, v in params.items():
            f.write(f"{k}={v}\n")
    with open(os.path.join(out_dir, "metrics.csv"), "w") as f:
        f.write("metric,value\n")
        f.write(f"mode,{metrics.mode}\n")
        f.write(f"seed,{metrics.seed}\n")
        f.write(f"finished,{int(metrics.finished)}\n")
        f.write(f"failure,{int(metrics.failure)}\n")
        f.write(f"exploration_time,{_fmt(metrics.exploration_time)}\n")
        f.write(f"path_length,{_fmt(metrics.total_path_length)}\n")
        f.write(f"final_coverage,{_fmt(metrics.final_coverage)}\n")
        f.write(f"nbv_count,{metrics.nbv_count}\n")
        f.write(f"samples_total,{sum(metrics.samples_per_step)}\n")
        f.write(f"clearance_violations,{metrics.clearance_violations}\n")
    with open(os.path.join(out_dir, "coverage.csv"), "w") as f:
        f.write("time,coverage\n")
        for t, c in metrics.coverage_curve:
            f.write(f"{_fmt(t)},{_fmt(c)}\n")
    state.explored.export_csv(os.path.join(out_dir, "map.csv"))
    state.graph.export_csv(os.path.join(out_dir, "graph_nodes.csv"),
                           os.path.join(out_dir, "graph_edges.csv"))


def _rerun_from_params(params):
    scenario = _resolve_scenario(params["scenario"])
    mode = PlannerMode(params["mode"])
    cfg = _make_config(mode, float(params["vmax"]))
    rng = np.random.default_rng(int(params["seed"]))
    return scenario, run_exploration(scenario, cfg, rng,
                                     int(params.get("start_index", "0")))


def cmd_explore(args):
    scenario = _resolve_scenario(args.scenario)
    mode = PlannerMode(args.mode)
    cfg = _make_config(mode, args.vmax)
    rng = np.random.default_rng(args.seed)
    metrics, state = run_exploration(scenario, cfg, rng)
    metrics.seed = args.seed
    params = {"scenario": args.scenario, "mode": args.mode,
              "seed": args.seed, "vmax": cfg.limits.v_max,
              "start_index": 0}
    _write_run_outputs(args.out, metrics, state, params)
    if metrics.failure:
        print(f"run failed: {metrics.failure_reason}", file=sys.stderr)
        return 1
    print(f"coverage {metrics.final_coverage:.3f} in "
          f"{metrics.exploration_time:.1f} s simulated, "
          f"{metrics.nbv_count} views")
    return 0


def cmd_benchmark(args):
    scenario = _resolve_scenario(args.scenario)
    modes = parse_modes(args.modes)
    cfg = _make_config(vmax=args.vmax)
    report = run_benchmark([scenario], modes, args.runs, args.base_seed, cfg)
    export_report(report, args.out)
    n_failed = sum(1 for _, m in report.records if m.failure)
    print(f"{len(report.records)} runs, {n_failed} failed; "
          f"report in {args.out}")
    return 1 if n_failed else 0


def cmd_deadend(args):
    scenario = generate_deadend(args.length, args.width)
    modes = parse_modes(args.modes)
    cfg = _make_config()
    cfg.sample_budget_per_tier = args.tier_budget
    os.makedirs(args.out, exist_ok=True)
    results = {}
    for mode in modes:
        outcome, wall = deadend_trial(scenario, mode, cfg, seed=args.seed)
        results[mode.value] = (outcome, wall)
    with open(os.path.join(args.out, "deadend.csv"), "w") as f:
        f.write("mode,found,tier,samples,wall_time\n")
        for name, (outcome, wall) in results.items():
            found = int(outcome.kind == "executed")
            f.write(f"{name},{found},{outcome.tier_used},"
                    f"{outcome.samples_used},{_fmt(wall)}\n")
    for name, (outcome, wall) in results.items():
        print(f"{name}: tier {outcome.tier_used}, "
              f"{outcome.samples_used} samples, {wall:.2f} s")
    a = results.get(PlannerMode.AUGMENTED.value)
    b = results.get(PlannerMode.AUGMENTED_NOHISTORY.value)
    if a and b and b[0].samples_used:
        print(f"sample ratio {a[0].samples_used / b[0].samples_used:.3f}, "
              f"wall ratio {a[1] / max(b[1], 1e-9):.3f}")
    return 0


def cmd_export_map(args):
    path = os.path.join(args.run, "params.txt")
    if not os.path.isfile(path):
        raise ScenarioParseError(f"no params.txt in {args.run}")
    params = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                k, _, v = line.partition("=")
                params[k] = v
    scenario, (metrics, state) = _rerun_from_params(params)
    state.explored.export_csv(os.path.join(args.run, "map.csv"))
    scenario.truth.export_csv(os.path.join(args.run, "truth.csv"))
    state.graph.export_csv(os.path.join(args.run, "graph_nodes.csv"),
                           os.path.join(args.run, "graph_edges.csv"))
    print(f"map exported to {args.run}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nbvx", description="sampling-based exploration planner")
    sub = parser.add_subparsers(dest="command", required=True)
    mode_names = [m.value for m in PlannerMode]

    p = sub.add_parser("explore", help="single seeded exploration run")
    p.add_argument("--scenario", required=True,
                   help="scenario file or bundled name")
    p.add_argument("--mode", choices=mode_names, default="augmented")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vmax", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("benchmark", help="multi-run comparison batch")
    p.add_argument("--scenario", required=True)
    p.add_argument("--modes", default="augmented,baseline",
                   help="comma-separated mode list")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--vmax", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("deadend-test",
                       help="history-reseed comparison on a dead-end")
    p.add_argument("--length", type=float, default=20.0)
    p.add_argument("--width", type=float, default=2.0)
    p.add_argument("--modes", default="augmented,augmented-nohistory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tier-budget", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_deadend)

    p = sub.add_parser("export-map",
                       help="re-export map/graph CSVs for a recorded run")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_export_map)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ScenarioParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NbvxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
