"""Election protocol for one node, as pure functions.

Every operation takes a :class:`NodeState` plus an input (a draw, a message,
or the current time) and returns a new state and the messages to send.  The
input state is never mutated.  Nodes have no clock, timers or entropy of
their own: draws and time come in as arguments, and the roulette-wheel
stream lives in the state as an immutable :class:`SeededRng`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .randomness import SeededRng, Wheel, mix_seed, next_draw, spin, to_micro


class ConfigError(ValueError):
    pass


class ContractViolation(RuntimeError):
    """An operation was called in a state where its precondition fails."""


class ProtocolError(ValueError):
    """A message was rejected; the caller drops it and records why."""


class StaleMessage(ProtocolError):
    pass


class Mode(str, Enum):
    BASIC = "basic"
    CANDIDATE = "candidate"
    COORDINATOR = "coordinator"
    LEADER = "leader"
    DOWN = "down"


class Kind(str, Enum):
    PROPOSAL = "proposal"
    POSITIVE = "positive_vote"
    NEGATIVE = "negative_vote"
    ANNOUNCEMENT = "announcement"
    HEARTBEAT = "heartbeat"


VALUE_KINDS = (Kind.PROPOSAL, Kind.POSITIVE, Kind.NEGATIVE)


@dataclass(frozen=True)
class Message:
    kind: Kind
    src: int
    dst: int
    round: int
    value: Optional[int] = None
    already_coordinator: bool = False
    leader: Optional[int] = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "from": self.src, "to": self.dst, "round": self.round}
        if self.value is not None:
            d["value"] = self.value
        if self.kind is Kind.NEGATIVE:
            d["already_coordinator"] = self.already_coordinator
        if self.leader is not None:
            d["leader"] = self.leader
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Message":
        return cls(
            kind=Kind(d["kind"]),
            src=d["from"],
            dst=d["to"],
            round=d["round"],
            value=d.get("value"),
            already_coordinator=d.get("already_coordinator", False),
            leader=d.get("leader"),
        )


@dataclass(frozen=True)
class ElectionConfig:
    v: int = 5
    membership: Optional[tuple[int, ...]] = None
    threshold: float = 0.85
    streak_len: int = 3
    draw_period_ms: int = 1
    vote_timeout_ms: int = 50
    leader_ack_timeout_ms: int = 20
    heartbeat_interval_ms: int = 25
    leader_miss_limit: int = 3
    optimized: bool = False

    def __post_init__(self):
        if self.membership is None:
            object.__setattr__(self, "membership", tuple(range(self.v)))
        else:
            object.__setattr__(self, "membership", tuple(self.membership))
        if self.v < 3:
            raise ConfigError(f"cluster size must be >= 3, got {self.v}")
        if sorted(self.membership) != list(range(self.v)):
            raise ConfigError(f"membership must be the ids 0..{self.v - 1}, got {self.membership}")
        if not 0 < self.threshold < 1:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")
        to_micro(self.threshold)
        for name in ("streak_len", "draw_period_ms", "vote_timeout_ms", "leader_ack_timeout_ms",
                     "heartbeat_interval_ms", "leader_miss_limit"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def majority(self) -> int:
        return self.v // 2 + 1

    @property
    def threshold_micro(self) -> int:
        return to_micro(self.threshold)

    @property
    def heartbeat_timeout_ms(self) -> int:
        """Silence after which a follower gives up on its leader."""
        return self.leader_miss_limit * self.heartbeat_interval_ms

    @property
    def voter_patience_ms(self) -> int:
        """How long a node that voted waits for a leader before starting a new round.

        Covers a full vote timeout, two announcement retries and the usual
        heartbeat silence, so a healthy election never trips it.
        """
        return self.vote_timeout_ms + 2 * self.leader_ack_timeout_ms + self.heartbeat_timeout_ms

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["membership"] = list(self.membership)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ElectionConfig":
        d = dict(d)
        if d.get("membership") is not None:
            d["membership"] = tuple(d["membership"])
        return cls(**d)


@dataclass
class NodeState:
    id: int
    config: ElectionConfig
    rng: SeededRng
    mode: Mode = Mode.BASIC
    round: int = 0
    streak: int = 0
    greatest: Optional[int] = None
    voted_for: Optional[tuple[int, int]] = None
    drawing_enabled: bool = True
    received_values: dict = field(default_factory=dict)
    positive_votes: frozenset = frozenset()
    responders: frozenset = frozenset()
    leader: Optional[int] = None
    announced: Optional[int] = None
    excluded: frozenset = frozenset()
    vote_deadline: Optional[int] = None
    leader_ack_deadline: Optional[int] = None
    leader_heartbeat_deadline: Optional[int] = None
    next_heartbeat_at: Optional[int] = None
    known_up: frozenset = frozenset()

    def copy(self) -> "NodeState":
        return dataclasses.replace(self, received_values=dict(self.received_values))

    @property
    def peers(self) -> tuple[int, ...]:
        return tuple(n for n in self.config.membership if n != self.id)

    @property
    def blocked(self) -> bool:
        return len(self.known_up) < self.config.majority

    def summary(self) -> dict:
        return {"mode": self.mode.value, "round": self.round}


def init_node(node_id: int, config: ElectionConfig, rng: Optional[SeededRng] = None) -> NodeState:
    if node_id not in config.membership:
        raise ConfigError(f"node {node_id} is not a member of {config.membership}")
    if rng is None:
        rng = SeededRng(mix_seed(0, node_id, 1))
    return NodeState(id=node_id, config=config, rng=rng, known_up=frozenset(config.membership))


def _reset_round(s: NodeState, rnd: int):
    s.round = rnd
    s.mode = Mode.BASIC
    s.streak = 0
    s.greatest = None
    s.voted_for = None
    s.drawing_enabled = True
    s.received_values = {}
    s.positive_votes = frozenset()
    s.responders = frozenset()
    s.leader = None
    s.announced = None
    s.excluded = frozenset()
    s.vote_deadline = None
    s.leader_ack_deadline = None
    s.leader_heartbeat_deadline = None
    s.next_heartbeat_at = None


def _drop_candidacy(s: NodeState):
    s.mode = Mode.BASIC
    s.positive_votes = frozenset()
    s.responders = frozenset()
    s.received_values = {}
    s.vote_deadline = None
    s.leader_ack_deadline = None
    s.announced = None


def _check_live(state: NodeState):
    if state.mode is Mode.DOWN:
        raise ProtocolError(f"node {state.id} is down")


def _check_msg(state: NodeState, msg: Message, *kinds: Kind):
    if msg.kind not in kinds:
        raise ProtocolError(f"unexpected {msg.kind.value} message")
    if msg.dst != state.id:
        raise ProtocolError(f"message for node {msg.dst} delivered to node {state.id}")
    if msg.src not in state.config.membership:
        raise ProtocolError(f"sender {msg.src} is not a member")
    if msg.kind in VALUE_KINDS and msg.value is None:
        raise ProtocolError(f"{msg.kind.value} from {msg.src} carries no value")
    if msg.kind in (Kind.ANNOUNCEMENT, Kind.HEARTBEAT) and msg.leader is None:
        raise ProtocolError(f"{msg.kind.value} from {msg.src} names no leader")


def _response_value(s: NodeState) -> int:
    # a node that has not drawn yet answers with one fresh draw
    if s.greatest is None:
        s.rng, s.greatest = next_draw(s.rng)
    return s.greatest


def _broadcast(s: NodeState, kind: Kind, **fields) -> list[Message]:
    return [Message(kind, s.id, p, s.round, **fields) for p in s.peers]


def _announce(s: NodeState, now: int) -> list[Message]:
    """Spin the wheel over this round's values and announce the winner."""
    pool = {s.id: _response_value(s)}
    pool.update(s.received_values)
    entries = tuple((n, w) for n, w in sorted(pool.items()) if n not in s.excluded)
    if not entries:
        _start_new_round(s)
        return []
    s.rng, winner = spin(Wheel(entries), s.rng)
    s.announced = winner
    s.leader_ack_deadline = now + s.config.leader_ack_timeout_ms
    return [Message(Kind.ANNOUNCEMENT, s.id, winner, s.round, leader=winner)]


def _promote(s: NodeState, now: int) -> list[Message]:
    s.mode = Mode.COORDINATOR
    s.vote_deadline = None
    return _announce(s, now)


def _start_new_round(s: NodeState):
    _reset_round(s, s.round + 1)


def on_draw(state: NodeState, draw: int, now: int) -> tuple[NodeState, list[Message]]:
    """Feed one random draw (micro-units) to a drawing node."""
    if state.mode is not Mode.BASIC or not state.drawing_enabled:
        raise ContractViolation(f"node {state.id} is not drawing (mode={state.mode.value})")
    if not 0 < draw < 1_000_000:
        raise ContractViolation(f"draw {draw} outside (0, 1)")
    s = state.copy()
    if s.blocked:
        return s, []
    s.greatest = draw if s.greatest is None else max(s.greatest, draw)
    s.streak = s.streak + 1 if draw > s.config.threshold_micro else 0
    if s.streak < s.config.streak_len:
        return s, []
    s.mode = Mode.CANDIDATE
    s.voted_for = (s.id, s.greatest)
    s.positive_votes = frozenset({s.id})
    s.responders = frozenset()
    s.received_values = {}
    s.drawing_enabled = False
    s.vote_deadline = now + s.config.vote_timeout_ms
    s.leader_heartbeat_deadline = None
    return s, _broadcast(s, Kind.PROPOSAL, value=s.greatest)


def handle_proposal(state: NodeState, msg: Message, now: int) -> tuple[NodeState, list[Message]]:
    _check_live(state)
    _check_msg(state, msg, Kind.PROPOSAL)
    s = state.copy()
    s.known_up = s.known_up | {msg.src}

    def reply(kind, flag=False):
        return [Message(kind, s.id, msg.src, s.round, value=_response_value(s), already_coordinator=flag)]

    if msg.round < s.round:
        # tells the sender which round we are in
        return s, reply(Kind.NEGATIVE)
    if msg.round > s.round:
        _reset_round(s, msg.round)

    if s.mode in (Mode.COORDINATOR, Mode.LEADER) or s.leader is not None:
        return s, reply(Kind.NEGATIVE, flag=True)

    if s.config.optimized:
        grant = s.voted_for is None
    else:
        grant = s.voted_for is None or s.voted_for[1] < msg.value

    if s.mode is Mode.BASIC:
        s.drawing_enabled = False
        s.leader_heartbeat_deadline = now + s.config.voter_patience_ms
    if not grant:
        return s, reply(Kind.NEGATIVE)

    if s.mode is Mode.CANDIDATE:
        _drop_candidacy(s)
        s.drawing_enabled = False
        s.leader_heartbeat_deadline = now + s.config.voter_patience_ms
    s.voted_for = (msg.src, msg.value)
    return s, reply(Kind.POSITIVE)


def handle_vote_response(state: NodeState, msg: Message, now: int) -> tuple[NodeState, list[Message]]:
    _check_live(state)
    _check_msg(state, msg, Kind.POSITIVE, Kind.NEGATIVE)
    if msg.round < state.round:
        raise StaleMessage(f"response for round {msg.round} at round {state.round}")
    s = state.copy()
    s.known_up = s.known_up | {msg.src}

    if msg.round > s.round:
        # our proposal was stale; catch up and keep drawing in the newer round
        _reset_round(s, msg.round)
        return s, []

    if s.mode is Mode.COORDINATOR:
        s.received_values[msg.src] = msg.value
        return s, []
    if s.mode is not Mode.CANDIDATE:
        return s, []

    s.received_values[msg.src] = msg.value
    s.responders = s.responders | {msg.src}
    cfg = s.config
    if msg.kind is Kind.POSITIVE:
        s.positive_votes = s.positive_votes | {msg.src}
    elif msg.already_coordinator or (not cfg.optimized and msg.value > s.greatest):
        _drop_candidacy(s)
        s.drawing_enabled = True
        s.streak = 0
        s.leader_heartbeat_deadline = now + cfg.voter_patience_ms
        return s, []

    if cfg.optimized:
        if len(s.positive_votes) >= cfg.majority:
            return s, _promote(s, now)
    elif len(s.responders) == cfg.v - 1 and len(s.positive_votes) >= cfg.majority:
        return s, _promote(s, now)
    return s, []


def handle_announcement(state: NodeState, msg: Message, now: int) -> tuple[NodeState, list[Message]]:
    _check_live(state)
    _check_msg(state, msg, Kind.ANNOUNCEMENT)
    if msg.leader != state.id:
        raise ProtocolError(f"announcement names node {msg.leader}, received by {state.id}")
    if msg.round < state.round:
        raise StaleMessage(f"announcement for round {msg.round} at round {state.round}")
    s = state.copy()
    s.known_up = s.known_up | {msg.src}
    if msg.round > s.round:
        _reset_round(s, msg.round)
    s.mode = Mode.LEADER
    s.leader = s.id
    s.drawing_enabled = False
    s.vote_deadline = None
    s.leader_ack_deadline = None
    s.leader_heartbeat_deadline = None
    s.next_heartbeat_at = now + s.config.heartbeat_interval_ms
    return s, _broadcast(s, Kind.HEARTBEAT, leader=s.id)


def handle_heartbeat(state: NodeState, msg: Message, now: int) -> NodeState:
    _check_live(state)
    _check_msg(state, msg, Kind.HEARTBEAT)
    if msg.round < state.round:
        raise StaleMessage(f"heartbeat for round {msg.round} at round {state.round}")
    s = state.copy()
    s.known_up = s.known_up | {msg.src}
    if msg.round > s.round:
        _reset_round(s, msg.round)
    if msg.leader != s.id:
        _drop_candidacy(s)
        s.next_heartbeat_at = None
    s.leader = msg.leader
    s.drawing_enabled = False
    s.leader_heartbeat_deadline = now + s.config.heartbeat_timeout_ms
    return s


def next_deadline(state: NodeState) -> Optional[int]:
    """The one deadline that matters in the node's current mode."""
    return {
        Mode.BASIC: state.leader_heartbeat_deadline,
        Mode.CANDIDATE: state.vote_deadline,
        Mode.COORDINATOR: state.leader_ack_deadline,
        Mode.LEADER: state.next_heartbeat_at,
        Mode.DOWN: None,
    }[state.mode]


def on_timeout(state: NodeState, now: int) -> tuple[NodeState, list[Message]]:
    s = state.copy()
    due = next_deadline(s)
    if due is None or due > now:
        return s, []
    cfg = s.config

    if s.mode is Mode.LEADER:
        while s.next_heartbeat_at <= now:
            s.next_heartbeat_at += cfg.heartbeat_interval_ms
        return s, _broadcast(s, Kind.HEARTBEAT, leader=s.id)

    if s.mode is Mode.CANDIDATE:
        s.vote_deadline = None
        if len(s.positive_votes) >= cfg.majority:
            return s, _promote(s, now)
        silent = set(s.peers) - s.responders
        s.known_up = s.known_up - silent
        _start_new_round(s)
        return s, []

    if s.mode is Mode.COORDINATOR:
        if s.announced is not None and s.announced != s.id:
            s.known_up = s.known_up - {s.announced}
        s.excluded = s.excluded | {s.announced}
        return s, _announce(s, now)

    # basic node: leader silent for too long, or no leader emerged after voting
    if s.leader is not None and s.leader != s.id:
        s.known_up = s.known_up - {s.leader}
    _start_new_round(s)
    return s, []


def crash(state: NodeState) -> NodeState:
    s = state.copy()
    _reset_round(s, s.round)
    s.mode = Mode.DOWN
    s.drawing_enabled = False
    return s


def recover(state: NodeState, now: int) -> NodeState:
    """Bring a crashed node back: round kept, everything else fresh.

    It listens for one heartbeat timeout before it may start an election.
    """
    s = state.copy()
    _reset_round(s, s.round)
    s.drawing_enabled = False
    s.known_up = frozenset(s.config.membership)
    s.leader_heartbeat_deadline = now + s.config.heartbeat_timeout_ms
    return s
