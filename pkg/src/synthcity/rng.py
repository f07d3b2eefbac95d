"""
Stable seed derivation.

Every random stream in the pipeline is keyed by a tuple of labels (world seed,
lot id, counter, ...) hashed with BLAKE2b, so one lot's stream never depends
on how many draws another lot made or on execution order. Python's builtin
hash() is salted per process and must not be used here.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(*parts) -> int:
    """Hash ``parts`` into a 64-bit unsigned seed."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def stream(*parts) -> np.random.Generator:
    """Independent numpy Generator for the given key."""
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed
