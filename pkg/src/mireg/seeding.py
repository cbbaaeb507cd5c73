"""Seed derivation.

Every random stream is a numpy PCG64 generator seeded from a 64-bit value
derived from the root seed with splitmix64. Named streams hash their name
with CRC32 first, so ``derive_seed(root, "test", 3)`` is stable across runs,
platforms and Python versions.
"""

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed, *keys):
    """Mix ``seed`` with a sequence of ints or strings into a new 64-bit seed."""
    s = int(seed) & MASK64
    for key in keys:
        if isinstance(key, str):
            key = zlib.crc32(key.encode("utf-8"))
        s = splitmix64(s ^ splitmix64(int(key) & MASK64))
    return s


def rng_for(seed, *keys):
    return np.random.default_rng(derive_seed(seed, *keys))
