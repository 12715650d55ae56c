"""Named random sub-streams derived from one run seed.

Every stochastic stage (split, init, shuffle, random-order, probe) draws from
its own generator so re-running one stage never perturbs another.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part: object) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def substream(seed: int, *names: object) -> np.random.Generator:
    """Generator for ``(seed, *names)``; stable across processes and platforms."""
    entropy = [int(seed) & 0xFFFFFFFF] + [_key(n) for n in names]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
