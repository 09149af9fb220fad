"""Named deterministic RNG streams.

Every stochastic component draws from its own stream derived from
(seed, purpose labels), so reordering one component's draws never
perturbs another's.
"""
from __future__ import annotations

import zlib

import numpy as np


def named_rng(*keys: int | str) -> np.random.Generator:
    """Generator seeded by a mix of integer seeds and string labels.

    Same keys give the same stream on every platform.
    """
    entropy = []
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode("utf-8")))
        else:
            entropy.append(int(key) & 0xFFFFFFFFFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(entropy))
