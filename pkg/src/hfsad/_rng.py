"""Independent random streams keyed by (seed, trial, purpose, node)."""

import numpy as np

PURPOSES = {"data": 0, "participation": 1, "baseline": 2, "init": 3, "verify": 4}


def derive_rng(seed, trial=0, purpose="data", node=0):
    """A ``Generator`` whose stream depends only on its key.

    Streams for different purposes never overlap, so e.g. participation
    draws cannot perturb problem generation between scenario variants.
    """
    key = (int(trial), PURPOSES[purpose], int(node))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=key))
