"""Seed derivation for order-independent random streams.

Every stream is a Philox (counter-based) generator keyed by a master seed and
a tuple of nonnegative integers, e.g. ``(cell, trial)``. The stream for a given
key never depends on which other streams were drawn first.
"""

import numpy as np


def make_rng(seed, *key) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *key) -> int:
    """A 63-bit integer seed for the stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
