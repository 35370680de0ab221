"""Seed derivation helpers.

Every random draw in the package flows from an integer seed. Sub-tasks
(nodes, candidates, repetitions) get child seeds derived from the parent seed
plus a key path, so serial and parallel execution consume identical streams.
"""

import numpy as np


def derive_seed(seed, *keys):
    """Deterministic child seed for ``seed`` under the integer key path ``keys``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def rng_for(seed, *keys):
    """A fresh ``numpy.random.Generator`` for ``(seed, *keys)``."""
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.default_rng(int(seed))
