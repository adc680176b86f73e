"""Per-purpose seed derivation.

Every random draw in the package takes its generator from ``rng_for`` so a
single master seed reproduces a whole run.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, purpose: str) -> int:
    """Hash ``seed`` and ``purpose`` into a 63-bit integer seed."""
    digest = hashlib.sha256(f"{int(seed)}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, purpose))
