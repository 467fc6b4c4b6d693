"""Named RNG substreams derived from a single master seed.

Every stochastic component draws from its own substream so that runs are
bit-reproducible and the evaluation stream does not depend on the number of
actors.
"""
from __future__ import annotations

import numpy as np

ACTOR_KEY = 0
LEARNER_KEY = 1
EVAL_KEY = 2
PAIRS_KEY = 3


def substream(seed: int, *key: int) -> np.random.Generator:
    """A generator for the substream identified by ``key`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def actor_stream(seed: int, actor_index: int) -> np.random.Generator:
    return substream(seed, ACTOR_KEY, actor_index)
