"""Finite Step Q-learning (FSQ) and a baseline DQN on small continuous-control tasks."""

from fsq.core import (
    ActionSpaceSpec,
    AgentConfig,
    AuxiliaryState,
    EpisodeRecord,
    Transition,
    direction_to_index,
    index_to_direction,
    integrate_action,
)
from fsq.kernels import BACKEND

__all__ = [
    "ActionSpaceSpec",
    "AgentConfig",
    "AuxiliaryState",
    "BACKEND",
    "EpisodeRecord",
    "Transition",
    "direction_to_index",
    "index_to_direction",
    "integrate_action",
]
