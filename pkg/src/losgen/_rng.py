"""Seed handling shared by every stochastic routine in the package.

All randomness is drawn from :class:`numpy.random.Generator` instances that
are built from an explicit integer seed.  Independent substreams are derived
by hashing ``(seed, *keys)`` through :class:`numpy.random.SeedSequence`, so
that e.g. adding a column to a dataset never perturbs the other columns.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Return a generator for the substream ``keys`` of ``seed``."""
    if seed is None or int(seed) < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed or an existing generator (which is returned as is)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return substream(seed)
