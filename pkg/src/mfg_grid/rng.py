"""Counter-based random streams.

A stream is addressed by ``(seed, purpose, *keys)`` and is independent of
every other address, so draws never depend on execution order or on how
agents are split across workers.
"""
from __future__ import annotations

import numpy as np

PURPOSES = {
    "bus_scale": 1,
    "weather": 2,
    "noise": 3,
    "shock_demand": 4,
    "shock_supply": 5,
    "init": 6,
    "regen_draw": 7,
    "regen_state": 8,
    "sample": 9,
}


def stream(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    try:
        pid = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown stream purpose {purpose!r}") from None
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(pid, *map(int, keys)))
    return np.random.Generator(np.random.Philox(ss))
