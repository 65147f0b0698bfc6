"""Command-line front end.

    run <config.json> [--seed N] [--out DIR] [--ell L]
    sweep <config.json> --seeds A..B [--jobs K] [--ell L]
    verify <trace.bin>
    attack-demo <name> --mode <external|standard>
    export-scenarios <dir>

Config files are versioned JSON mirroring the scenario schema; unknown
fields are errors. Exit codes: 0 success (observed violations match the
config's expectation), 2 invalid config or unknown attack, 3 I/O or corrupt
trace.
"""

import argparse
import json
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor

from .analysis import build_report, check_safety, verify_integrity
from .codec import encode
from .config import ScenarioConfig
from .engine import Trace, run_execution
from .errors import CorruptTrace, InvalidConfig, UnknownAttack
from .scenarios import attack_demo_config, scenario_files


def _load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        sys.exit(3)
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        sys.exit(2)
    try:
        return ScenarioConfig.from_dict(raw)
    except InvalidConfig as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        sys.exit(2)


def _run_one(config: ScenarioConfig, ell=None):
    trace = run_execution(config)
    report = build_report(trace, ell=ell)
    return trace, report


def cmd_run(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
        config.validate()
    trace, report = _run_one(config, ell=args.ell)
    print(report.to_json())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "trace.bin"), "wb") as fh:
            fh.write(trace.serialize())
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    violated = report.safety_violations > 0
    return 0 if violated == config.expect_violations else 1


def _sweep_worker(payload):
    config_dict, seed, ell = payload
    config = ScenarioConfig.from_dict(config_dict)
    config.seed = seed
    _trace, report = _run_one(config, ell=ell)
    d = report.to_dict()
    d.pop("safety_locations", None)
    return seed, d


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    try:
        lo, hi = args.seeds.split("..")
        seeds = range(int(lo), int(hi) + 1)
    except ValueError:
        print("error: --seeds expects A..B", file=sys.stderr)
        return 2
    payloads = [(config.to_dict(), s, args.ell) for s in seeds]
    results = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_sweep_worker, payloads))
    else:
        results = [_sweep_worker(p) for p in payloads]
    results.sort(key=lambda r: r[0])
    lat = [r[1]["latency_mean_delta"] for r in results if r[1]["latency_mean_delta"] is not None]
    agg = {
        "config_digest": results[0][1]["config_digest"] if results else "?",
        "seeds": [r[0] for r in results],
        "runs": len(results),
        "total_safety_violations": sum(r[1]["safety_violations"] for r in results),
        "total_liveness_misses": sum(r[1]["liveness_misses"] for r in results),
        "total_policy_violations": sum(r[1]["policy_violations"] for r in results),
        "mean_latency_delta": statistics.fmean(lat) if lat else None,
        "per_seed": [r[1] for r in results],
    }
    print(encode(agg).decode())
    return 0 if agg["total_safety_violations"] == 0 or config.expect_violations else 1


def cmd_verify(args) -> int:
    try:
        with open(args.trace, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        print(f"error: cannot read trace: {exc}", file=sys.stderr)
        return 3
    try:
        trace = Trace.deserialize(blob)
        verify_integrity(trace)
    except CorruptTrace as exc:
        print(f"error: corrupt trace: {exc}", file=sys.stderr)
        return 3
    report = build_report(trace, ell=args.ell)
    print(report.to_json())
    return 0


def cmd_attack_demo(args) -> int:
    try:
        config = attack_demo_config(args.name, args.mode)
    except UnknownAttack as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    trace, report = _run_one(config)
    expected = "succeeded" if config.expect_violations else "blocked"
    outcome = {
        "attack": args.name,
        "mode": args.mode,
        "outcome": report.attack,
        "expected": expected,
        "as_expected": report.attack == expected,
        "safety_violations": report.safety_violations,
        "policy_violations": report.policy_violations,
    }
    print(encode(outcome).decode())
    return 0 if outcome["as_expected"] else 1


def cmd_export_scenarios(args) -> int:
    os.makedirs(args.dir, exist_ok=True)
    for name, config in sorted(scenario_files().items()):
        path = os.path.join(args.dir, f"{name}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(config.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        print(path)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sleepysim",
                                     description="Sleepy consensus simulator and attack harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None, help="directory for trace.bin and report.json")
    p_run.add_argument("--ell", type=int, default=None, help="liveness parameter in slots")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a seed range")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--seeds", required=True, help="inclusive range A..B")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--ell", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="recompute checks from a persisted trace")
    p_verify.add_argument("trace")
    p_verify.add_argument("--ell", type=int, default=None)
    p_verify.set_defaults(func=cmd_verify)

    p_demo = sub.add_parser("attack-demo", help="run a canned separation scenario")
    p_demo.add_argument("name", choices=["key_transfer", "forward_sim", "backward_sim"])
    p_demo.add_argument("--mode", choices=["external", "standard"], required=True)
    p_demo.set_defaults(func=cmd_attack_demo)

    p_export = sub.add_parser("export-scenarios", help="write the canned config library")
    p_export.add_argument("dir")
    p_export.set_defaults(func=cmd_export_scenarios)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
