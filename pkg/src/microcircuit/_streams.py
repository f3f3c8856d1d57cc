"""Deterministic, independently keyed random streams.

Every random draw in the package comes from a generator keyed by
(seed, purpose tag, *indices).  Streams are independent of each other
and of execution order, so builds and simulations can be partitioned
across workers without changing a single drawn number.
"""

import numpy as np

TAG_SYNAPSES = 1
TAG_POSITIONS = 2
TAG_MEMBRANE_INIT = 3
TAG_BACKGROUND = 4
TAG_SAMPLING = 5


def stream(seed, *key) -> np.random.Generator:
    """Generator for the stream keyed by (seed, *key)."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng([int(seed), *map(int, key)])
