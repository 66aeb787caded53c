"""Seeded draws, roulette-wheel selection and streak probabilities.

The generator is SplitMix64 used in counter mode: the ``k``-th 64-bit output
of a stream seeded with ``s`` is ``mix64(s + (k + 1) * GOLDEN)``.  A
:class:`SeededRng` is therefore just ``(seed, counter)``, an immutable value
that can be copied, compared and serialised, and produces the same numbers
on every platform.

Draw values are integers in micro-units: ``1..999999`` stands for
``0.000001..0.999999``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

MICRO = 1_000_000
DRAW_LEVELS = MICRO - 1  # representable values strictly inside (0, 1)


def mix64(z: int) -> int:
    """SplitMix64 finaliser."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(run_seed: int, *keys: int) -> int:
    """Derive a sub-seed from ``run_seed`` and a path of integer keys.

    ``mix_seed(s, i)`` is node ``i``'s stream seed; further keys select
    independent streams for the same node (draws, wheel spins, ...).
    """
    h = mix64(run_seed & MASK64)
    for k in keys:
        h = mix64((h ^ mix64((k & MASK64) + GOLDEN)) & MASK64)
    return h


@dataclass(frozen=True)
class SeededRng:
    seed: int
    counter: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def next_u64(rng: SeededRng) -> tuple[SeededRng, int]:
    out = mix64(rng.seed + (rng.counter + 1) * GOLDEN)
    return SeededRng(rng.seed, rng.counter + 1), out


def next_below(rng: SeededRng, n: int) -> tuple[SeededRng, int]:
    """Uniform integer in ``[0, n)`` by rejection (no modulo bias)."""
    if n <= 0:
        raise ValueError("n must be positive")
    limit = (1 << 64) - ((1 << 64) % n)
    while True:
        rng, x = next_u64(rng)
        if x < limit:
            return rng, x % n


def next_draw(rng: SeededRng) -> tuple[SeededRng, int]:
    """One draw, uniform over the 999999 micro-unit values in (0, 1)."""
    rng, k = next_below(rng, DRAW_LEVELS)
    return rng, k + 1


def to_micro(x: float) -> int:
    m = round(x * MICRO)
    if not 0 < m < MICRO:
        raise ValueError(f"{x!r} is not a 6-decimal value in (0, 1)")
    return m


def from_micro(m: int) -> float:
    return m / MICRO


def fmt_micro(m: int) -> str:
    return f"0.{m:06d}"


class EmptyWheelError(ValueError):
    pass


@dataclass(frozen=True)
class Wheel:
    """Roulette wheel over ``(node_id, weight)`` entries.

    Weights are positive integers (draw values in micro-units), so the total
    and the cumulative segment bounds are exact.
    """

    entries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((int(n), int(w)) for n, w in self.entries))
        for node, weight in self.entries:
            if weight <= 0:
                raise ValueError(f"wheel weight for node {node} must be positive, got {weight}")

    @classmethod
    def from_fractions(cls, entries: Iterable[tuple[int, float]]) -> "Wheel":
        return cls(tuple((n, to_micro(x)) for n, x in entries))

    @property
    def total(self) -> int:
        return sum(w for _, w in self.entries)

    def __len__(self):
        return len(self.entries)


def select_index(wheel: Wheel, point: int) -> int:
    """Index of the segment containing ``point`` (``0 <= point < total``)."""
    if not wheel.entries:
        raise EmptyWheelError("cannot select from an empty wheel")
    if not 0 <= point < wheel.total:
        raise ValueError(f"point {point} outside [0, {wheel.total})")
    acc = 0
    for i, (_, w) in enumerate(wheel.entries):
        acc += w
        if point < acc:
            return i
    raise AssertionError("unreachable")


def spin(wheel: Wheel, rng: SeededRng) -> tuple[SeededRng, int]:
    """Pick a node with probability ``weight / total``.

    One 64-bit uniform ``x`` is scaled to the wheel as ``(x * total) >> 64``.
    Scaling every weight by the same integer leaves the winner unchanged for
    the same ``x``.
    """
    if not wheel.entries:
        raise EmptyWheelError("cannot spin an empty wheel; start a new round")
    rng, x = next_u64(rng)
    point = (x * wheel.total) >> 64
    return rng, wheel.entries[select_index(wheel, point)][0]


def _check_p(p: float, r: int):
    if not 0 < p < 1:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if r < 1:
        raise ValueError(f"streak length must be >= 1, got {r}")


def streak_probability(p: float, r: int) -> float:
    """Probability that ``r`` given draws all succeed: ``p ** r``."""
    _check_p(p, r)
    acc = 1.0
    for _ in range(r):
        acc = p * acc
    return acc


def expected_draws_to_streak(p: float, r: int) -> float:
    """Mean number of Bernoulli(p) draws until ``r`` consecutive successes."""
    _check_p(p, r)
    return sum(p ** -i for i in range(1, r + 1))


def prob_streak_within(p: float, r: int, n: int) -> float:
    """Probability of a run of ``r`` successes within the first ``n`` draws.

    Dynamic programme over the current streak length ``0..r-1``; mass that
    reaches ``r`` is absorbed.  O(n * r).
    """
    _check_p(p, r)
    if n < 0:
        raise ValueError("n must be >= 0")
    dist = [0.0] * r
    dist[0] = 1.0
    done = 0.0
    q = 1.0 - p
    for _ in range(n):
        nxt = [0.0] * r
        nxt[0] = q * sum(dist)
        for k in range(r - 1):
            nxt[k + 1] = p * dist[k]
        done += p * dist[r - 1]
        dist = nxt
    return min(done, 1.0)
