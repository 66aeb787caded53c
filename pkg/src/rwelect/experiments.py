"""Monte Carlo campaigns: launch-condition timing and election benchmarks."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import ElectionConfig
from .randomness import MICRO, mix_seed, to_micro
from .simnet import LatencyModel, RunStats, StopRule, UniformRange, run

log = logging.getLogger(__name__)

BUCKET_MS = 50


@dataclass
class CampaignSummary:
    iterations: int
    elected: int
    mean_ms: Optional[float]
    min_ms: Optional[int]
    max_ms: Optional[int]
    p90_ms: Optional[int]
    split_vote_fraction: float
    histogram: list[tuple[int, int, int]]
    blocked: int = 0
    liveness_failures: int = 0
    within_100ms: Optional[float] = None
    samples: tuple = field(default=(), repr=False)
    runs: list[RunStats] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "elected": self.elected,
            "mean_ms": self.mean_ms,
            "min_ms": self.min_ms,
            "max_ms": self.max_ms,
            "p90_ms": self.p90_ms,
            "split_vote_fraction": self.split_vote_fraction,
            "blocked": self.blocked,
            "liveness_failures": self.liveness_failures,
            "within_100ms": self.within_100ms,
            "histogram": [list(b) for b in self.histogram],
        }


def histogram(values: Sequence[int], width: int = BUCKET_MS) -> list[tuple[int, int, int]]:
    if len(values) == 0:
        return []
    counts = np.bincount(np.asarray(values, dtype=np.int64) // width)
    return [(i * width, (i + 1) * width, int(c)) for i, c in enumerate(counts)]


def p90(sorted_values: Sequence[int]) -> int:
    """Nearest-rank 90th percentile."""
    k = max(1, math.ceil(0.9 * len(sorted_values)))
    return int(sorted_values[k - 1])


def summarize(times: Sequence[int], iterations: int, split: int = 0, **extra) -> CampaignSummary:
    ts = sorted(int(t) for t in times)
    if not ts:
        return CampaignSummary(iterations, 0, None, None, None, None, 0.0, [], **extra)
    return CampaignSummary(
        iterations=iterations,
        elected=len(ts),
        mean_ms=float(np.mean(ts)),
        min_ms=ts[0],
        max_ms=ts[-1],
        p90_ms=p90(ts),
        split_vote_fraction=split / len(ts),
        histogram=histogram(ts),
        **extra,
    )


def launch_draw_counts(threshold: float, streak_len: int, iterations: int, seed: int) -> np.ndarray:
    """Draws each of ``iterations`` independent nodes needs to meet the launch condition.

    Vectorised over nodes with NumPy's PCG64; nodes leave the active set as
    they finish.  Draws are micro-unit integers, as in the simulator.
    """
    rng = np.random.default_rng(seed)
    thr = to_micro(threshold)
    counts = np.zeros(iterations, dtype=np.int64)
    active = np.arange(iterations)
    streak = np.zeros(iterations, dtype=np.int64)
    t = 0
    while active.size:
        t += 1
        d = rng.integers(1, MICRO, size=active.size)
        streak = np.where(d > thr, streak + 1, 0)
        done = streak >= streak_len
        counts[active[done]] = t
        active = active[~done]
        streak = streak[~done]
    return counts


def launch_time_campaign(threshold: float, streak_len: int, draw_period_ms: int,
                         iterations: int, seed: int) -> CampaignSummary:
    if iterations < 100:
        raise ValueError("launch_time_campaign needs at least 100 iterations")
    times = launch_draw_counts(threshold, streak_len, iterations, seed) * draw_period_ms
    within = float(np.mean(times <= 100))
    return summarize(times, iterations, within_100ms=within, samples=tuple(times.tolist()))


def min_of_k_mean(samples: Sequence[int], k: int = 5) -> float:
    """Mean of the minimum over disjoint groups of ``k`` launch times."""
    a = np.asarray(samples)
    n = (a.size // k) * k
    return float(a[:n].reshape(-1, k).min(axis=1).mean())


def _one_run(args):
    config, latency, run_seed, stop = args
    _, stats = run(config, run_seed, latency, (), stop)
    return stats


def election_benchmark(config: ElectionConfig, latency: LatencyModel = UniformRange(1, 5),
                       iterations: int = 500, seed: int = 0, stop: StopRule = StopRule(),
                       workers: int = 1) -> CampaignSummary:
    """Run ``iterations`` fault-free elections with sub-seeds ``mix_seed(seed, i)``.

    Using the same ``seed`` for two configurations pairs their runs.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if iterations < 500:
        log.info("benchmark with %d iterations; 500 or more recommended", iterations)
    jobs = [(config, latency, mix_seed(seed, i), stop) for i in range(iterations)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_one_run, jobs, chunksize=16))
    else:
        runs = [_one_run(j) for j in jobs]
    ok = [r for r in runs if r.elected]
    return summarize(
        [r.election_ms for r in ok],
        iterations,
        split=sum(1 for r in ok if r.candidates_seen >= 2),
        blocked=sum(1 for r in runs if r.blocked),
        liveness_failures=sum(1 for r in runs if r.liveness_failure),
        runs=runs,
    )


# -- output ----------------------------------------------------------------------

def _write(path, text: str) -> Path:
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror or e}") from e
    return path


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def emit_csv(summary: CampaignSummary, path) -> Path:
    lines = ["bucket_lo_ms,bucket_hi_ms,count"]
    lines += [f"{lo},{hi},{c}" for lo, hi, c in summary.histogram]
    lines += ["", "stat,value"]
    for key in ("iterations", "elected", "mean_ms", "min_ms", "max_ms", "p90_ms",
                "split_vote_fraction", "blocked", "liveness_failures", "within_100ms"):
        lines.append(f"{key},{_fmt(getattr(summary, key))}")
    return _write(path, "\n".join(lines) + "\n")


def emit_histogram(summary: CampaignSummary, path, width: int = 50) -> Path:
    peak = max((c for _, _, c in summary.histogram), default=0)
    lines = []
    for lo, hi, c in summary.histogram:
        bar = "#" * (round(c * width / peak) if peak else 0)
        lines.append(f"{lo:5d}-{hi:<5d} ms |{bar} {c}")
    lines.append(f"mean={_fmt(summary.mean_ms)} min={_fmt(summary.min_ms)} "
                 f"max={_fmt(summary.max_ms)} p90={_fmt(summary.p90_ms)} "
                 f"split={_fmt(summary.split_vote_fraction)}")
    return _write(path, "\n".join(lines) + "\n")


def emit_json(summary: CampaignSummary, path) -> Path:
    return _write(path, json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
