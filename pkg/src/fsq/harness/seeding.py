"""Named random streams derived from one run seed.

Each consumer owns its generator, so replacing one stream (say ``replay``)
leaves the draws of the others untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STREAM_NAMES = ("env", "agent", "replay", "init")


@dataclass
class RunStreams:
    env: np.random.Generator  # resets and env noise
    agent: np.random.Generator  # exploration
    replay: np.random.Generator  # minibatch sampling
    init: np.random.Generator  # network initialisation


def make_streams(seed: int, **overrides: int) -> RunStreams:
    """Spawn one child seed per stream; ``overrides`` reseeds single streams by name."""
    unknown = set(overrides) - set(STREAM_NAMES)
    if unknown:
        raise ValueError(f"unknown stream(s) {sorted(unknown)}; expected a subset of {STREAM_NAMES}")
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    gens = {}
    for name, child in zip(STREAM_NAMES, children):
        source = np.random.SeedSequence(overrides[name]) if name in overrides else child
        gens[name] = np.random.default_rng(source)
    return RunStreams(**gens)
