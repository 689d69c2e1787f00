"""Counter-based random streams.

A stream is addressed by ``(seed, tag, index)``: the seed is the Philox key
and ``(tag, index)`` occupy the two high words of the 256-bit counter, so
every substream is disjoint from every other for any realistic number of
draws, and can be rebuilt without touching the others.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# tags for the independent families of draws used by the experiments
TRIALS = 0
LIMIT = 1
EXTRA = 2


def substream(seed: int, index: int, tag: int = TRIALS) -> np.random.Generator:
    bitgen = np.random.Philox(key=seed & MASK64, counter=[0, 0, tag & MASK64, index & MASK64])
    return np.random.Generator(bitgen)
