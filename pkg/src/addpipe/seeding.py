"""Splittable seeded randomness.

Every stochastic stage derives its generator from (global seed, stream keys)
so per-image work is order-independent and replays exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed, *keys) -> np.random.Generator:
    """Independent generator for (seed, *keys); same inputs, same stream."""
    entropy = [_key_to_int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed, *keys) -> int:
    """Stable 31-bit child seed, for recording in manifests."""
    return int(derive_rng(seed, *keys).integers(0, 2**31 - 1))
