"""Counter-based keyed random streams.

Every random draw in a run is addressed by ``(seed, stream, n)``; within a
step the k-th sample is the k-th draw of that generator, so asking for more
samples never changes the first ones. Philox is a counter-based bit
generator, which makes replays and parallel runs agree bit for bit.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    TRAIN = 0
    TEST = 1
    LABELS = 2
    FOLDS = 3
    SHUFFLE = 4
    TEST_LABELS = 5


def keyed_generator(seed: int, stream: int, n: int, sub: int = 0) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(n), int(sub)))
    return np.random.Generator(np.random.Philox(ss))
