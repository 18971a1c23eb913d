"""Deterministic derivation of independent random streams.

Every Monte-Carlo consumer derives its generator from a (master seed,
counter...) tuple, so results do not depend on evaluation order or on the
number of workers.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_rng"]


def derive_rng(master_seed: int, *counters: int) -> np.random.Generator:
    """Generator keyed by (master_seed, *counters); identical inputs yield
    identical streams regardless of call order."""
    seq = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1),
                                 spawn_key=tuple(int(c) for c in counters))
    return np.random.Generator(np.random.Philox(seq))
