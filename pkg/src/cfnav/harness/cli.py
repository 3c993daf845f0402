"""Command line: ``cfnav run|eval|bench|validate``."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from .runner import MODES, node_metrics, records_metrics, run_scenario
from .scenario import CONFIG_ENV, ScenarioError, find_scenario, load, shipped_scenarios
from .trace import (
    export_beliefs_csv,
    export_goal_grid_csv,
    export_tracks_csv,
    export_trajectories_csv,
    read_trace,
    write_trace,
)


def _kill(text):
    try:
        node, at = text.split("@")
        return int(node), float(at)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ID@T, got {text!r}") from None


def _prob(text):
    x = float(text)
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError("drop probability must be in [0, 1]")
    return x


def _common(p, mode_default="inference-only"):
    p.add_argument("--scenario", required=True, help=f"path or name (searched in ${CONFIG_ENV}, then shipped)")
    p.add_argument("--mode", choices=MODES, default=mode_default)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--drop-prob", type=_prob, default=None)
    p.add_argument("--kill-node", type=_kill, action="append", default=[], metavar="ID@T")


def build_parser():
    ap = argparse.ArgumentParser(prog="cfnav", description="Counterfactual goal inference and distributed tracking.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write a trace")
    _common(p)
    p.add_argument("--out", type=Path, default=None, help="trace file (.jsonl or .bin)")
    p.add_argument("--format", choices=("jsonl", "bin"), default=None)
    p.add_argument("--csv", type=Path, default=None, help="directory for plot-data CSV files")

    p = sub.add_parser("eval", help="CLEAR MOT of a full-pipeline run or of a saved trace")
    p.add_argument("--trace", type=Path, default=None)
    p.add_argument("--scenario", default=None)
    p.add_argument("--mode", choices=MODES, default="full-pipeline")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--drop-prob", type=_prob, default=None)
    p.add_argument("--kill-node", type=_kill, action="append", default=[], metavar="ID@T")
    p.add_argument("--cutoff", type=float, default=1.0)
    p.add_argument("--out", type=Path, default=None, help="write the metrics JSON here")

    p = sub.add_parser("bench", help="time the inference step and the compiled kernels")
    p.add_argument("--agents", type=int, nargs="+", default=[5, 20])
    p.add_argument("--goals", type=int, default=3)
    p.add_argument("--repeats", type=int, default=3, help="passes over the crowd frames")
    p.add_argument("--kernels", action="store_true", help="also compare numba and numpy kernels")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("validate", help="check scenario files against the schema")
    p.add_argument("--scenario", nargs="+", default=None, help="default: every shipped scenario")
    return ap


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True, default=float)
    if out is not None:
        Path(out).write_text(text + "\n")
    print(text)


def _clean(x):
    return None if isinstance(x, float) and math.isnan(x) else x


def cmd_run(args):
    scn = load(args.scenario)
    res = run_scenario(scn, args.mode, args.seed, args.drop_prob, args.kill_node)
    if args.out is not None:
        write_trace(res, args.out, args.format)
    if args.csv is not None:
        args.csv.mkdir(parents=True, exist_ok=True)
        export_beliefs_csv(res.records, args.csv / "beliefs.csv")
        export_trajectories_csv(res.records, args.csv / "trajectories.csv")
        export_goal_grid_csv(res.records, scn.goals, res.truth[-1].agents[0].id if res.truth[-1].agents else 0, args.csv / "goal_grid.csv")
        if args.mode == "full-pipeline":
            export_tracks_csv(res.records, args.csv / "tracks.csv")
    summary = {
        "scenario": res.scenario,
        "mode": res.mode,
        "seed": res.seed,
        "steps": len(res.records),
        "goal_switches": len(res.events),
        "final_argmax": {a: max(p, key=p.get) for a, p in res.records[-1]["beliefs"].items() if p},
    }
    if res.network:
        summary["network"] = res.network
    if args.out is not None:
        summary["trace"] = str(args.out)
    _emit(summary, None)
    return 0


def cmd_eval(args):
    if args.trace is not None:
        head, records = read_trace(args.trace)
        metrics = records_metrics(records, args.cutoff)
        source = {"trace": str(args.trace), "scenario": head.get("scenario"), "seed": head.get("seed")}
    elif args.scenario is not None:
        if args.mode != "full-pipeline":
            print("eval needs --mode full-pipeline (inference-only runs have no tracks)", file=sys.stderr)
            return 2
        res = run_scenario(load(args.scenario), args.mode, args.seed, args.drop_prob, args.kill_node)
        metrics = node_metrics(res, args.cutoff)
        source = {"scenario": res.scenario, "seed": res.seed, "network": res.network}
    else:
        print("eval needs --trace or --scenario", file=sys.stderr)
        return 2
    if not metrics:
        print("no track data to evaluate", file=sys.stderr)
        return 1
    out = {**source, "nodes": {str(n): {k: _clean(v) for k, v in m.as_dict().items()} for n, m in metrics.items()}}
    _emit(out, args.out)
    return 0


def cmd_bench(args):
    from .._accel import BACKEND
    from .bench import bench_infer, bench_kernels

    t0 = time.perf_counter()
    rows = {str(n): bench_infer(n, args.goals, args.repeats) for n in args.agents}
    out = {"backend": BACKEND, "goals": args.goals, "infer_all_median_ms": {k: v * 1e3 for k, v in rows.items()}}
    if len(args.agents) >= 2:
        lo, hi = str(min(args.agents)), str(max(args.agents))
        out["scaling_ratio"] = rows[hi] / rows[lo]
    if args.kernels:
        out["kernels_median_ms"] = {
            k: {b: (v * 1e3 if b != "speedup" else v) for b, v in r.items()} for k, r in bench_kernels().items()
        }
    out["wall_s"] = time.perf_counter() - t0
    _emit(out, args.out)
    return 0


def cmd_validate(args):
    names = args.scenario or shipped_scenarios()
    status = 0
    for name in names:
        try:
            path = find_scenario(name)
            load(path)
            print(f"ok      {path}")
        except ScenarioError as exc:
            print(f"invalid {name}: field {exc.field}: {exc}", file=sys.stderr)
            status = 1
        except FileNotFoundError as exc:
            print(f"missing {name}: {exc}", file=sys.stderr)
            status = 1
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return {"run": cmd_run, "eval": cmd_eval, "bench": cmd_bench, "validate": cmd_validate}[args.cmd](args)
    except ScenarioError as exc:
        print(f"invalid scenario: field {exc.field}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
