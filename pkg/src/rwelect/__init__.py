"""Randomized fault-tolerant leader election with roulette-wheel selection."""

from .core import ElectionConfig, Kind, Message, Mode, NodeState, init_node
from .randomness import SeededRng, Wheel, expected_draws_to_streak, prob_streak_within, spin, streak_probability
from .simnet import Fault, Fixed, RunStats, Scripted, StopRule, Trace, UniformRange, replay, run

__version__ = "0.1.0"
