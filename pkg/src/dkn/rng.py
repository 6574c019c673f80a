"""Seeded, splittable random number generation.

Every run owns a single 64-bit root seed.  Any component that needs
randomness derives its own generator with ``split(seed, name)``; the name
keeps the streams independent and makes the whole run bit-reproducible
regardless of the order in which components draw.
"""

import hashlib

import numpy as np


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def split(seed: int, name: str) -> np.random.Generator:
    """Derive an independent generator for `name` from the root seed."""
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, _name_key(name)]))
