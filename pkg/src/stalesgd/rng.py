"""Seed derivation for reproducible, independent random streams.

Every random draw in a run comes from a generator keyed by the master seed
plus a small tuple of integers (purpose tag, data-group, iteration, ...).
Keys are mixed with splitmix64, so streams never depend on call order and
changing one run dimension (e.g. the number of modules) leaves unrelated
streams untouched.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF

# purpose tags
BATCH = 1
EVAL = 2
INIT_NOISE = 3
PROBE = 4
PARTITION = 5
POWER_START = 6


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *keys: int) -> int:
    """Fold ``keys`` into ``master`` one splitmix64 round at a time."""
    h = splitmix64(int(master) & _MASK64)
    for key in keys:
        h = splitmix64(h ^ (int(key) & _MASK64))
    return h


def stream(master: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, *keys)))


def batch_rng(master: int, s: int, t: int) -> np.random.Generator:
    """Generator for the mini-batch drawn by data-group ``s`` at iteration ``t``."""
    return stream(master, BATCH, s, t)
