"""Deterministic named randomness.

Every random draw in a run flows from one config seed through named
substreams, so any artifact (dataset, init, decision log) can be
regenerated in isolation.
"""

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for (seed, name).

    The name is hashed, so streams are stable across sessions and
    platforms and insensitive to the order in which they are created.
    """
    tag = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))
