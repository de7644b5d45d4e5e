"""Seed handling.

All stochastic code in the package draws from numpy's Philox generator, a
counter-based algorithm with documented, platform-stable streams. Derived
streams (per replicate, per optimizer restart) come from a two-word key
(seed, index), so replicate k of seed s is reproducible in isolation.
"""

from __future__ import annotations

import numpy as np

__all__ = ["rng_from_seed"]


def rng_from_seed(seed: int, index: int = 0) -> np.random.Generator:
    """Generator keyed by (seed, index); same arguments, same stream."""
    key = np.array([int(seed) % 2 ** 64, int(index) % 2 ** 64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
