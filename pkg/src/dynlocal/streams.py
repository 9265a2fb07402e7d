"""Reproducible random streams.

Every stream is a Philox (counter-based) generator keyed by the root seed and
a tuple of integer labels, so replicate ``i`` draws the same numbers no matter
how work is split across processes.
"""
from __future__ import annotations

import numpy as np

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, *labels: int) -> np.random.Generator:
    """Independent generator for ``(seed, labels...)``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(x) for x in labels))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(rng)


# Labels used to separate purposes drawn from one root seed.
REPLICATE = 0
CONSTANTS = 1
VERIFY = 2
