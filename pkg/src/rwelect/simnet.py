"""Deterministic discrete-event simulation of a cluster running the election.

A run is a pure function of ``(config, seed, latency, faults, stop,
draw_script)``.  Time is an integer number of milliseconds; events at the
same instant execute in insertion order.  Every step is written to a
:class:`Trace`, which serialises to JSON lines: one header line with
everything needed to re-run, then one line per record.
"""

from __future__ import annotations

import heapq
import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from . import core
from .core import ElectionConfig, Kind, Message, Mode, NodeState, ProtocolError
from .randomness import SeededRng, mix_seed, next_below, next_draw

FORMAT_VERSION = 1

# sub-stream keys under the run seed
DRAW_STREAM = 0
WHEEL_STREAM = 1
NET_STREAM = 0xFFFF


class LatencyError(ValueError):
    pass


class ReplayDivergence(AssertionError):
    def __init__(self, index: int, expected: Optional[str], actual: Optional[str], reason: str = ""):
        self.index = index
        self.expected = expected
        self.actual = actual
        msg = f"replay diverged at record {index}"
        if reason:
            msg += f" ({reason})"
        msg += f"\n  expected: {expected}\n  actual:   {actual}"
        super().__init__(msg)


# -- latency models ----------------------------------------------------------

@dataclass(frozen=True)
class Fixed:
    delay: int = 2

    def __post_init__(self):
        if self.delay < 1:
            raise LatencyError("delays must be >= 1 ms")

    def sample(self, msg: Message, rng: SeededRng) -> tuple[SeededRng, int]:
        return rng, self.delay

    @property
    def max_delay(self) -> int:
        return self.delay

    def to_dict(self):
        return {"kind": "fixed", "delay": self.delay}


@dataclass(frozen=True)
class UniformRange:
    lo: int = 1
    hi: int = 5

    def __post_init__(self):
        if not 1 <= self.lo <= self.hi:
            raise LatencyError(f"need 1 <= lo <= hi, got {self.lo}..{self.hi}")

    def sample(self, msg: Message, rng: SeededRng) -> tuple[SeededRng, int]:
        rng, k = next_below(rng, self.hi - self.lo + 1)
        return rng, self.lo + k

    @property
    def max_delay(self) -> int:
        return self.hi

    def to_dict(self):
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Scripted:
    """Per-message delays keyed by ``(kind, from, to)``.

    Any key part may be ``"*"``; the most specific matching key wins.  A
    message no key covers raises :class:`LatencyError`.
    """

    delays: tuple[tuple[tuple[str, Any, Any], int], ...]

    def __post_init__(self):
        items = self.delays.items() if isinstance(self.delays, Mapping) else self.delays
        norm = tuple(sorted((((str(k[0]), _key_part(k[1]), _key_part(k[2])), int(d)) for k, d in items),
                            key=lambda kd: tuple(map(str, kd[0]))))
        for k, d in norm:
            if d < 1:
                raise LatencyError(f"delay for {k} must be >= 1 ms")
        object.__setattr__(self, "delays", norm)

    def sample(self, msg: Message, rng: SeededRng) -> tuple[SeededRng, int]:
        best = None
        for (kind, src, dst), d in self.delays:
            if kind not in ("*", msg.kind.value) or src not in ("*", msg.src) or dst not in ("*", msg.dst):
                continue
            score = (kind != "*") + (src != "*") + (dst != "*")
            if best is None or score > best[0]:
                best = (score, d)
        if best is None:
            raise LatencyError(f"no scripted delay for {msg.kind.value} {msg.src}->{msg.dst}")
        return rng, best[1]

    @property
    def max_delay(self) -> int:
        return max(d for _, d in self.delays)

    def to_dict(self):
        return {"kind": "scripted", "delays": [[list(k), d] for k, d in self.delays]}


def _key_part(x):
    return x if x == "*" else int(x)


LatencyModel = Union[Fixed, UniformRange, Scripted]


def latency_from_dict(d: Mapping) -> LatencyModel:
    kind = d.get("kind")
    if kind == "fixed":
        return Fixed(d["delay"])
    if kind == "uniform":
        return UniformRange(d["lo"], d["hi"])
    if kind == "scripted":
        return Scripted(tuple((tuple(k), v) for k, v in d["delays"]))
    raise LatencyError(f"unknown latency model {kind!r}")


# -- faults and stop rule ----------------------------------------------------

@dataclass(frozen=True)
class Fault:
    at: int
    action: str  # "crash" | "recover"
    node: int

    def __post_init__(self):
        if self.action not in ("crash", "recover"):
            raise ValueError(f"unknown fault action {self.action!r}")
        if self.at < 0:
            raise ValueError("fault times must be non-negative")

    def to_dict(self):
        return {"at": self.at, "action": self.action, "node": self.node}


def crash_at(node: int, at: int) -> Fault:
    return Fault(at, "crash", node)


def recover_at(node: int, at: int) -> Fault:
    return Fault(at, "recover", node)


def inject(*items: str) -> list[Fault]:
    """Build a fault schedule from ``"crash:node:at"`` / ``"recover:node:at"`` strings."""
    out = []
    for text in items:
        action, node, at = text.split(":")
        out.append(Fault(int(at), action, int(node)))
    return out


@dataclass(frozen=True)
class StopRule:
    """Stop once a leader is stable, or at ``max_ms``.

    A leader is stable when its heartbeat has reached a majority and
    ``settle_intervals`` further heartbeat intervals pass with no competing
    round.  With ``wait_for_faults`` the check is also held back until every
    scheduled fault has fired.
    """

    max_ms: int = 10_000
    settle_intervals: int = 2
    wait_for_faults: bool = True

    def to_dict(self):
        return {"max_ms": self.max_ms, "settle_intervals": self.settle_intervals,
                "wait_for_faults": self.wait_for_faults}


# -- trace -------------------------------------------------------------------

def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class TraceRecord:
    at: int
    seq: int
    node: int
    event: str
    round: int
    detail: dict

    def to_dict(self):
        return {"at": self.at, "seq": self.seq, "node": self.node, "event": self.event,
                "round": self.round, "detail": self.detail}


@dataclass
class Trace:
    header: dict
    records: list[TraceRecord] = field(default_factory=list)

    def body_lines(self) -> list[str]:
        return [dumps(r.to_dict()) for r in self.records]

    def to_jsonl(self) -> str:
        return "\n".join([dumps(self.header), *self.body_lines()]) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        try:
            path.write_text(self.to_jsonl())
        except OSError as e:
            raise OSError(f"cannot write trace to {path}: {e.strerror or e}") from e
        return path

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty trace")
        header = json.loads(lines[0])
        records = [TraceRecord(**json.loads(ln)) for ln in lines[1:]]
        return cls(header, records)

    @classmethod
    def read(cls, path) -> "Trace":
        return cls.from_jsonl(Path(path).read_text())

    def select(self, event: Optional[str] = None, node: Optional[int] = None) -> list[TraceRecord]:
        return [r for r in self.records
                if (event is None or r.event == event) and (node is None or r.node == node)]


@dataclass
class RunStats:
    elected: bool
    election_ms: Optional[int]
    leader: Optional[int]
    leader_round: Optional[int]
    candidates_seen: int
    rounds_used: int
    messages_by_kind: dict
    blocked: bool
    liveness_failure: bool
    end_ms: int

    @property
    def protocol_messages(self) -> int:
        """Messages sent, heartbeats excluded."""
        return sum(n for k, n in self.messages_by_kind.items() if k != Kind.HEARTBEAT.value)

    def to_dict(self):
        return dict(self.__dict__)


# -- simulation ----------------------------------------------------------------

@dataclass(order=True)
class SimEvent:
    at: int
    seq: int
    kind: str = field(compare=False)  # deliver | draw_tick | timer_check | crash | recover
    node: int = field(compare=False)
    message: Optional[Message] = field(default=None, compare=False)
    sent_at: Optional[int] = field(default=None, compare=False)


class _Simulation:
    def __init__(self, config: ElectionConfig, seed: int, latency: LatencyModel,
                 faults: Sequence[Fault], stop: StopRule,
                 draw_script: Optional[Mapping[int, Sequence[int]]]):
        self.cfg = config
        self.latency = latency
        self.stop = stop
        self.faults = list(faults)
        for f in self.faults:
            if f.node not in config.membership:
                raise ValueError(f"fault names unknown node {f.node}")
        self.last_fault = max((f.at for f in self.faults), default=-1)
        self.states: dict[int, NodeState] = {
            i: core.init_node(i, config, SeededRng(mix_seed(seed, i, WHEEL_STREAM)))
            for i in config.membership
        }
        self.draw_rngs = {i: SeededRng(mix_seed(seed, i, DRAW_STREAM)) for i in config.membership}
        self.scripts = {}
        for node, values in (draw_script or {}).items():
            self.scripts[int(node)] = itertools.cycle([int(x) for x in values])
        self.net = SeededRng(mix_seed(seed, NET_STREAM))
        self.queue: list[SimEvent] = []
        self.event_seq = itertools.count()
        self.records: list[TraceRecord] = []
        self.now = 0
        self.tick_pending: set[int] = set()
        self.timer_pending: dict[int, set[int]] = {i: set() for i in config.membership}
        self.hb_receipts: dict[tuple[int, int], set[int]] = {}
        self.elections: dict[tuple[int, int], int] = {}
        self.pending_stable: Optional[tuple[int, int, int]] = None
        self.stable: Optional[tuple[int, int]] = None

    # bookkeeping

    def push(self, at: int, kind: str, node: int, message=None, sent_at=None):
        heapq.heappush(self.queue, SimEvent(at, next(self.event_seq), kind, node, message, sent_at))

    def record(self, node: int, event: str, rnd: int, detail: dict):
        self.records.append(TraceRecord(self.now, len(self.records) + 1, node, event, rnd, detail))

    def set_state(self, node: int, new: NodeState, reason: Optional[str] = None):
        old = self.states[node]
        self.states[node] = new
        if old.mode is not new.mode or old.round != new.round:
            detail = {"from": old.mode.value, "to": new.mode.value, "from_round": old.round}
            if reason is None:
                if new.round != old.round:
                    reason = "new_round"
                elif old.mode is Mode.CANDIDATE and new.mode is Mode.BASIC:
                    reason = "revert"
                else:
                    reason = new.mode.value
            detail["reason"] = reason
            self.record(node, "state_change", new.round, detail)
        self.reschedule(node)

    def reschedule(self, node: int):
        s = self.states[node]
        if s.mode is Mode.DOWN:
            return
        if (s.mode is Mode.BASIC and s.drawing_enabled and not s.blocked
                and node not in self.tick_pending):
            self.tick_pending.add(node)
            self.push(self.now + self.cfg.draw_period_ms, "draw_tick", node)
        due = core.next_deadline(s)
        if due is not None:
            due = max(due, self.now)
            if due not in self.timer_pending[node]:
                self.timer_pending[node].add(due)
                self.push(due, "timer_check", node)

    def send(self, node: int, messages: Iterable[Message]):
        for msg in messages:
            self.net, delay = self.latency.sample(msg, self.net)
            detail = msg.to_dict()
            detail["deliver_at"] = self.now + delay
            self.record(node, "send", msg.round, detail)
            self.push(self.now + delay, "deliver", msg.dst, msg, self.now)

    # event handlers

    def on_draw_tick(self, node: int):
        self.tick_pending.discard(node)
        s = self.states[node]
        if s.mode is not Mode.BASIC or not s.drawing_enabled or s.blocked:
            return
        if node in self.scripts:
            value = next(self.scripts[node])
        else:
            self.draw_rngs[node], value = next_draw(self.draw_rngs[node])
        new, out = core.on_draw(s, value, self.now)
        self.record(node, "draw", s.round, {"value": value, "streak": new.streak})
        self.set_state(node, new, "launch" if new.mode is Mode.CANDIDATE else None)
        self.send(node, out)

    def on_timer(self, node: int):
        self.timer_pending[node].discard(self.now)
        s = self.states[node]
        due = core.next_deadline(s)
        if due is None or due > self.now:
            return
        which = {Mode.BASIC: "leader_heartbeat", Mode.CANDIDATE: "vote",
                 Mode.COORDINATOR: "leader_ack", Mode.LEADER: "heartbeat_interval"}[s.mode]
        if s.mode is not Mode.LEADER:
            self.record(node, "timeout", s.round, {"deadline": which})
        new, out = core.on_timeout(s, self.now)
        self.set_state(node, new)
        self.send(node, out)

    def on_deliver(self, ev: SimEvent):
        msg, node = ev.message, ev.node
        s = self.states[node]
        detail = msg.to_dict()
        if s.mode is Mode.DOWN:
            self.record(node, "drop", s.round, {"reason": "down", "message": detail})
            return
        detail["sent_at"] = ev.sent_at
        self.record(node, "recv", s.round, detail)
        try:
            if msg.kind is Kind.PROPOSAL:
                new, out = core.handle_proposal(s, msg, self.now)
            elif msg.kind in (Kind.POSITIVE, Kind.NEGATIVE):
                new, out = core.handle_vote_response(s, msg, self.now)
            elif msg.kind is Kind.ANNOUNCEMENT:
                new, out = core.handle_announcement(s, msg, self.now)
            else:
                new, out = core.handle_heartbeat(s, msg, self.now), []
        except ProtocolError as e:
            self.record(node, "drop", s.round, {"reason": str(e), "message": detail})
            return
        self.set_state(node, new)
        self.send(node, out)
        if msg.kind is Kind.HEARTBEAT:
            self.note_heartbeat(msg, node)

    def note_heartbeat(self, msg: Message, node: int):
        key = (msg.leader, msg.round)
        got = self.hb_receipts.setdefault(key, set())
        got.add(node)
        if key in self.elections or len(got) + 1 < self.cfg.majority:
            return
        self.elections[key] = self.now
        self.record(msg.leader, "elected", msg.round, {"leader": msg.leader, "election_ms": self.now})
        check = self.now + self.stop.settle_intervals * self.cfg.heartbeat_interval_ms
        if self.stop.wait_for_faults:
            check = max(check, self.last_fault + 1)
        self.pending_stable = (msg.leader, msg.round, check)

    def on_fault(self, ev: SimEvent):
        s = self.states[ev.node]
        if ev.kind == "crash":
            if s.mode is Mode.DOWN:
                return
            self.record(ev.node, "crash", s.round, {})
            self.set_state(ev.node, core.crash(s), "crash")
            self.tick_pending.discard(ev.node)
        else:
            if s.mode is not Mode.DOWN:
                return
            self.record(ev.node, "recover", s.round, {})
            self.set_state(ev.node, core.recover(s, self.now), "recover")

    def leader_is_stable(self, leader: int, rnd: int) -> bool:
        s = self.states[leader]
        if s.mode is not Mode.LEADER or s.round != rnd:
            return False
        for other in self.states.values():
            if other.mode is Mode.DOWN:
                continue
            if other.round > rnd or (other.mode is Mode.LEADER and other.id != leader):
                return False
        return True

    def check_stable(self, upto: int) -> bool:
        """Evaluate a pending stability check whose time is before ``upto``."""
        if self.pending_stable is None or self.pending_stable[2] >= upto:
            return False
        leader, rnd, at = self.pending_stable
        self.pending_stable = None
        if self.leader_is_stable(leader, rnd):
            self.stable = (leader, rnd)
            self.now = at
            return True
        return False

    # main loop

    def run(self) -> int:
        for f in self.faults:
            self.push(f.at, f.action, f.node)
        for i, s in self.states.items():
            # no leader at start: every heartbeat deadline has already expired
            self.states[i] = _with(s, leader_heartbeat_deadline=0, drawing_enabled=False)
            self.reschedule(i)
        while self.queue:
            ev = self.queue[0]
            if self.check_stable(ev.at):
                return self.now
            if ev.at > self.stop.max_ms:
                break
            heapq.heappop(self.queue)
            self.now = ev.at
            if ev.kind == "deliver":
                self.on_deliver(ev)
            elif ev.kind == "draw_tick":
                self.on_draw_tick(ev.node)
            elif ev.kind == "timer_check":
                self.on_timer(ev.node)
            else:
                self.on_fault(ev)
        if self.check_stable(self.stop.max_ms + 1):
            return self.now
        return self.stop.max_ms if self.queue else self.now

    def stats(self, end_ms: int) -> RunStats:
        kinds = Counter(r.detail["kind"] for r in self.records if r.event == "send")
        up = sum(1 for s in self.states.values() if s.mode is not Mode.DOWN)
        if self.stable is not None:
            leader, rnd = self.stable
            cands = {r.node for r in self.records
                     if r.event == "state_change" and r.detail["to"] == "candidate" and r.round == rnd}
            return RunStats(True, self.elections[self.stable], leader, rnd, len(cands), rnd,
                            dict(sorted(kinds.items())), False, False, end_ms)
        rounds = max(s.round for s in self.states.values())
        blocked = up < self.cfg.majority
        return RunStats(False, None, None, None, 0, rounds, dict(sorted(kinds.items())),
                        blocked, not blocked, end_ms)


def _with(state: NodeState, **changes) -> NodeState:
    s = state.copy()
    for k, v in changes.items():
        setattr(s, k, v)
    return s


def make_header(config: ElectionConfig, seed: int, latency: LatencyModel, faults: Sequence[Fault],
                stop: StopRule, draw_script: Optional[Mapping[int, Sequence[int]]] = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "seed": seed,
        "latency": latency.to_dict(),
        "faults": [f.to_dict() for f in faults],
        "stop": stop.to_dict(),
        "draw_script": None if draw_script is None
        else {str(k): [int(x) for x in v] for k, v in sorted(draw_script.items())},
    }


def run(config: ElectionConfig, seed: int, latency: LatencyModel = UniformRange(1, 5),
        faults: Sequence[Fault] = (), stop: StopRule = StopRule(),
        draw_script: Optional[Mapping[int, Sequence[int]]] = None) -> tuple[Trace, RunStats]:
    """Simulate one election from a leaderless start at t=0."""
    faults = sorted(faults, key=lambda f: f.at)
    sim = _Simulation(config, seed, latency, faults, stop, draw_script)
    end = sim.run()
    header = make_header(config, seed, latency, faults, stop, draw_script)
    return Trace(header, sim.records), sim.stats(end)


def run_from_header(header: Mapping) -> tuple[Trace, RunStats]:
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported trace format {header.get('format_version')!r}")
    script = header.get("draw_script")
    return run(
        ElectionConfig.from_dict(header["config"]),
        int(header["seed"]),
        latency_from_dict(header["latency"]),
        [Fault(**f) for f in header["faults"]],
        StopRule(**header["stop"]),
        None if script is None else {int(k): v for k, v in script.items()},
    )


def replay(trace: Union[Trace, str, Path]) -> Trace:
    """Re-run a trace from its header and require a byte-identical body."""
    if not isinstance(trace, Trace):
        trace = Trace.read(trace)
    expected = trace.body_lines()
    try:
        fresh, _ = run_from_header(trace.header)
    except (KeyError, TypeError, ValueError) as e:
        raise ReplayDivergence(1, expected[0] if expected else None, None, f"bad header: {e}") from e
    actual = fresh.body_lines()
    for i, (a, b) in enumerate(zip(expected, actual), start=1):
        if a != b:
            raise ReplayDivergence(i, a, b)
    if len(expected) != len(actual):
        i = min(len(expected), len(actual)) + 1
        raise ReplayDivergence(i, expected[i - 1] if i <= len(expected) else None,
                               actual[i - 1] if i <= len(actual) else None, "length differs")
    return fresh
