"""Seeded, splittable random streams.

Every stream is a PCG64 generator keyed by a ``SeedSequence`` built from the
master seed and an integer spawn key, so stream ``(seed, 3, 7)`` is the same
no matter which thread or process asks for it.
"""
from __future__ import annotations

import numpy as np

GENERATOR_NAME = "pcg64"


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValueError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return seed


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for the sub-stream ``stream`` of ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))
