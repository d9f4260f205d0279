"""Seed derivation.

Every random draw in the package comes from a PCG64 generator whose seed is
derived from the user's single ``--seed`` plus a component label and an
index. Derivation hashes the tuple with BLAKE2b and keeps the first 8 bytes,
so child streams do not depend on the order in which they are created.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *keys: object) -> int:
    """Return a 64-bit child seed for ``(seed, *keys)``."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed) & MASK64).encode())
    for key in keys:
        h.update(b"\x1f")
        h.update(str(key).encode())
    return int.from_bytes(h.digest(), "little")


def generator(seed: int, *keys: object) -> np.random.Generator:
    """PCG64 generator for the derived child seed."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))
