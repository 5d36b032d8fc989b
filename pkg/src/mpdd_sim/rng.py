"""Counter-based random number plumbing.

Philox generators keyed by structured seeds give reproducible,
order-independent streams: every Monte-Carlo trial derives its own
generator from (master seed, point index, trial index) so results do not
depend on worker count or scheduling.
"""

from __future__ import annotations

import numpy as np

__all__ = ["as_rng", "spawn_rng"]


def spawn_rng(*key: int) -> np.random.Generator:
    """Independent Philox generator derived from an integer key tuple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def as_rng(seed: int | np.random.Generator) -> np.random.Generator:
    """Pass through a Generator, or build a Philox generator from an int seed."""
    if isinstance(seed, np.random.Generator):
        return seed
    return spawn_rng(int(seed))
