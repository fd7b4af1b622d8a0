"""Counter-derived random streams.

Every consumer of randomness derives its own generator from (seed, stream tag,
counters) instead of advancing a shared one. That makes any point in a run
reproducible from small integers alone, which is what lets a resumed run
replay the exact upcoming batches without serializing generator state.
"""

import numpy as np

PARAMS = 1
MASK = 2
ORDER = 3
SYNTH = 4
FOILS = 5


def derive(seed: int, *counters: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *[int(c) for c in counters]])
