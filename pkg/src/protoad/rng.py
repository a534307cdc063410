"""Named random substreams derived from a single run seed.

Every source of randomness in the package (parameter init, prototype init,
epoch shuffling, dropout, data generation) pulls from its own named stream,
so adding or removing one consumer never perturbs the draws of another.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for the (seed, name) stream. Deterministic and independent per name."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    tag = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))
