"""Named, independent random streams derived from one base seed.

Every stochastic step (data generation, train/test split, weight init,
batch shuffling) pulls from its own stream so that changing e.g. the
number of epochs never perturbs the dataset, and runs are reproducible
end to end from a single integer seed.
"""

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Return a Generator keyed by (seed, name).

    Streams for different names are statistically independent; the same
    (seed, name) pair always yields the identical sequence.
    """
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, tag]))
