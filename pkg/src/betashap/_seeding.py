"""Seed derivation.

Every random stream in the package comes from a root seed plus a tuple of
labels, hashed with SHA-256. The same (seed, labels) pair always yields the
same stream, independent of call order or thread scheduling.
"""

import hashlib

import numpy as np


def derive_seed(seed, *labels):
    """64-bit child seed for ``seed`` and a path of string/int labels."""
    text = ":".join([str(int(seed))] + [str(x) for x in labels])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


def rng_for(seed, *labels):
    """A PCG64 generator keyed by ``(seed, *labels)``."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *labels)))
