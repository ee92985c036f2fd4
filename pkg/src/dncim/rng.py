"""Counter-based random substreams.

Every random draw in an experiment comes from a Philox generator keyed by
``(master_seed, replicate, purpose, ...)``, so results do not depend on
which worker ran which task or in what order.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    DATA = 0
    PARTITION = 1
    REFERENCE = 2
    ORACLE = 3
    IMPORTANCE = 4
    MISC = 9


def substream(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the key path ``keys`` under ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    return substream(int(rng))
