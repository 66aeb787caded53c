"""Command-line front end.

Exit codes: 0 success, 1 runtime or liveness failure, 2 usage error.
Output files default to ``$RWELECT_OUT_DIR`` (or the working directory).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

from . import scenarios
from .core import ConfigError, ElectionConfig
from .experiments import election_benchmark, emit_csv, emit_histogram, emit_json
from .randomness import MICRO, expected_draws_to_streak, to_micro, prob_streak_within, streak_probability
from .simnet import (Fault, LatencyError, ReplayDivergence, StopRule, Trace, UniformRange,
                     latency_from_dict, replay, run)

OUT_DIR_ENV = "RWELECT_OUT_DIR"

CONFIG_KEYS = {
    "v", "membership", "threshold", "streak_len", "draw_period_ms", "vote_timeout_ms",
    "leader_ack_timeout_ms", "heartbeat_interval_ms", "leader_miss_limit", "optimized",
    "seed", "latency", "faults", "stop", "trace", "out_dir", "iterations",
}
ELECTION_KEYS = set(ElectionConfig.__dataclass_fields__)


class UsageError(Exception):
    pass


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "."))


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def _node_at(text: str) -> tuple[int, int]:
    try:
        node, at = text.split(":")
        return int(node), int(at)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected node:at_ms, got {text!r}")


def _lo_hi(text: str) -> dict:
    try:
        lo, hi = text.split(":")
        return UniformRange(int(lo), int(hi)).to_dict()
    except (ValueError, LatencyError):
        raise argparse.ArgumentTypeError(f"expected lo:hi milliseconds, got {text!r}")


def resolve(args, file_cfg: dict) -> dict:
    """Merge flags over file values; a flag contradicting the file is an error."""
    flags = {}
    if getattr(args, "nodes", None) is not None:
        flags["v"] = args.nodes
    for flag, key in (("seed", "seed"), ("threshold", "threshold"), ("streak", "streak_len"),
                      ("latency", "latency"), ("trace", "trace"), ("out", "out_dir"),
                      ("iterations", "iterations")):
        if getattr(args, flag, None) is not None:
            flags[key] = getattr(args, flag)
    if getattr(args, "optimized", False):
        flags["optimized"] = True
    faults = [Fault(at, "crash", n).to_dict() for n, at in getattr(args, "crash", None) or []]
    faults += [Fault(at, "recover", n).to_dict() for n, at in getattr(args, "recover", None) or []]
    if faults:
        flags["faults"] = faults
    if getattr(args, "max_ms", None) is not None:
        flags["stop"] = {**file_cfg.get("stop", {}), "max_ms": args.max_ms}

    merged = dict(file_cfg)
    for key, value in flags.items():
        if key in file_cfg and file_cfg[key] != value and key != "stop":
            raise UsageError(f"--{key} conflicts with the config file ({file_cfg[key]!r} vs {value!r})")
        merged[key] = value
    return merged


def build_run(cfg: dict):
    try:
        election = ElectionConfig.from_dict({k: v for k, v in cfg.items() if k in ELECTION_KEYS})
        latency = latency_from_dict(cfg.get("latency", UniformRange(1, 5).to_dict()))
        faults = [Fault(**f) for f in cfg.get("faults", [])]
        stop = StopRule(**cfg.get("stop", {}))
    except (ConfigError, LatencyError, TypeError, ValueError, KeyError) as e:
        raise UsageError(str(e)) from e
    return election, int(cfg.get("seed", 0)), latency, faults, stop


# -- subcommands -------------------------------------------------------------------

def cmd_scenario(args) -> int:
    if args.name == "case1":
        trace, check = scenarios.run_scenario_case1(), scenarios.check_case1
    else:
        trace, check = scenarios.run_scenario_case2(), scenarios.check_case2
    path = Path(args.trace) if args.trace else default_out_dir() / f"{args.name}.trace.jsonl"
    trace.write(path)
    print(scenarios.ladder(trace))
    print(f"protocol messages (heartbeats excluded): {scenarios.protocol_message_count(trace)}")
    coords = [scenarios.NAMES[r.node] for r in trace.records
              if r.event == "state_change" and r.detail["to"] == "coordinator"]
    leaders = [scenarios.NAMES[r.node] for r in trace.records
               if r.event == "state_change" and r.detail["to"] == "leader"]
    print(f"coordinator: {', '.join(coords)}  leader: {', '.join(leaders)}")
    print(f"trace: {path}")
    failures = check(trace)
    for f in failures:
        print(f"FAILED: {f}", file=sys.stderr)
    return 0 if not failures else 1


def cmd_elect(args) -> int:
    cfg = resolve(args, load_config_file(args.config) if args.config else {})
    election, seed, latency, faults, stop = build_run(cfg)
    trace, stats = run(election, seed, latency, faults, stop)
    trace.header["resolved"] = {
        **election.to_dict(), "seed": seed, "latency": latency.to_dict(),
        "faults": [f.to_dict() for f in faults], "stop": stop.to_dict(),
        "trace": cfg.get("trace"),
    }
    if cfg.get("trace"):
        trace.write(cfg["trace"])
    kinds = ", ".join(f"{k}={n}" for k, n in stats.messages_by_kind.items())
    if stats.elected:
        print(f"leader: {stats.leader}  round: {stats.leader_round}  election_ms: {stats.election_ms}")
        print(f"candidates in winning round: {stats.candidates_seen}")
        print(f"messages: {kinds}")
        return 0
    if stats.blocked:
        print(f"blocked: fewer than {election.majority} of {election.v} nodes up; no leader elected")
    else:
        print(f"liveness failure: no stable leader by {stop.max_ms} ms")
    print(f"messages: {kinds}")
    return 1


def cmd_bench(args) -> int:
    cfg = resolve(args, load_config_file(args.config) if args.config else {})
    iterations = int(cfg.get("iterations", 500))
    if iterations < 1:
        raise UsageError("--iterations must be >= 1")
    election, seed, latency, _, stop = build_run(cfg)
    summary = election_benchmark(election, latency, iterations, seed, stop, workers=args.workers)
    out = Path(cfg.get("out_dir") or default_out_dir())
    try:
        out.mkdir(parents=True, exist_ok=True)
        emit_csv(summary, out / "summary.csv")
        emit_json(summary, out / "summary.json")
        emit_histogram(summary, out / "histogram.txt")
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"iterations={summary.iterations} elected={summary.elected} "
          f"blocked={summary.blocked} liveness_failures={summary.liveness_failures}")
    if summary.elected:
        print(f"mean={summary.mean_ms:.1f} ms min={summary.min_ms} ms max={summary.max_ms} ms "
              f"p90={summary.p90_ms} ms")
    print(f"split_vote_fraction={summary.split_vote_fraction:.4f}")
    print(f"wrote {out / 'summary.csv'}, {out / 'summary.json'}, {out / 'histogram.txt'}")
    return 0


def cmd_analyze(args) -> int:
    if not 0 < args.threshold < 1:
        raise UsageError("--threshold must be in (0, 1)")
    try:
        to_micro(args.threshold)
    except ValueError as e:
        raise UsageError(str(e)) from e
    if args.streak < 1 or args.draws < 0:
        raise UsageError("--streak must be >= 1 and --draws >= 0")
    p = (MICRO - to_micro(args.threshold)) / MICRO
    print(f"p(draw > {args.threshold:g}) = {p:.6g}")
    print(f"streak_probability = {streak_probability(p, args.streak):.12g}")
    print(f"expected_draws_to_streak = {expected_draws_to_streak(p, args.streak):.6f}")
    print(f"prob_streak_within({args.draws}) = {prob_streak_within(p, args.streak, args.draws):.12g}")
    return 0


def cmd_replay(args) -> int:
    try:
        trace = Trace.read(args.trace)
    except (OSError, ValueError) as e:
        print(f"error: cannot read {args.trace}: {e}", file=sys.stderr)
        return 1
    try:
        fresh = replay(trace)
    except ReplayDivergence as e:
        print(str(e), file=sys.stderr)
        return 1
    print(f"replay identical: {len(fresh.records)} records")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rwelect", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sc = sub.add_parser("scenario", help="run a scripted case study")
    sc.add_argument("name", choices=["case1", "case2"])
    sc.add_argument("--trace", help="trace output path")
    sc.set_defaults(func=cmd_scenario)

    def sim_flags(sp):
        sp.add_argument("--config", help="JSON run-config file")
        sp.add_argument("--nodes", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threshold", type=float)
        sp.add_argument("--streak", type=int)
        sp.add_argument("--optimized", action="store_true")
        sp.add_argument("--latency", type=_lo_hi, metavar="LO:HI")
        sp.add_argument("--max-ms", type=int)

    el = sub.add_parser("elect", help="simulate one election")
    sim_flags(el)
    el.add_argument("--crash", type=_node_at, action="append", metavar="NODE:AT_MS")
    el.add_argument("--recover", type=_node_at, action="append", metavar="NODE:AT_MS")
    el.add_argument("--trace", help="trace output path")
    el.set_defaults(func=cmd_elect)

    be = sub.add_parser("bench", help="benchmark campaign")
    sim_flags(be)
    be.add_argument("--iterations", type=int)
    be.add_argument("--out", help="output directory")
    be.add_argument("--workers", type=int, default=1)
    be.set_defaults(func=cmd_bench)

    an = sub.add_parser("analyze", help="closed-form launch probabilities")
    an.add_argument("--threshold", type=float, default=0.85)
    an.add_argument("--streak", type=int, default=3)
    an.add_argument("--draws", type=int, default=100)
    an.set_defaults(func=cmd_analyze)

    rp = sub.add_parser("replay", help="re-run a trace and compare")
    rp.add_argument("trace")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
