"""Named random streams derived from one master seed.

Each stream is a Philox generator keyed by ``SeedSequence((seed, crc32(name)))``, so a
stream's draws depend only on the master seed and its own name.  Adding a stream or
changing how much another stream consumes leaves it untouched.
"""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("structure", "init", "training", "sampling", "eval")


def stream(seed: int, name: str) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), key))))


def streams(seed: int, names=STREAMS) -> dict[str, np.random.Generator]:
    return {n: stream(seed, n) for n in names}
