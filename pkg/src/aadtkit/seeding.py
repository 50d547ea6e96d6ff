"""Named random substreams derived from a single run seed.

Every stochastic step in the toolkit (station split, network init, CV fold
assignment, corpus generation) draws from its own substream so that changing
one step never perturbs another.  Substreams are derived deterministically
from (seed, label) and are stable across platforms and processes.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream_seed", "rng_for"]


def substream_seed(seed: int, label: str) -> int:
    """Derive a 64-bit seed for the named substream of a run seed."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") ^ (seed & 0xFFFFFFFFFFFFFFFF)


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Generator for the named substream of a run seed."""
    return np.random.default_rng(substream_seed(seed, label))
