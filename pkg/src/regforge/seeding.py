"""Seed plumbing: one root seed, named substreams."""
import zlib

import numpy as np


def seed_sequence(seed, *names):
    """SeedSequence for ``seed`` refined by a path of stream names."""
    if isinstance(seed, np.random.SeedSequence):
        base = list(seed.entropy) if isinstance(seed.entropy, (list, tuple)) else [seed.entropy]
        key = base + list(seed.spawn_key)
    else:
        key = [int(seed)]
    for name in names:
        key.append(zlib.crc32(str(name).encode()) if not isinstance(name, int) else int(name))
    return np.random.SeedSequence(key)


def make_rng(seed, *names):
    if isinstance(seed, np.random.Generator):
        if names:
            raise ValueError("cannot derive named streams from a Generator")
        return seed
    return np.random.default_rng(seed_sequence(seed, *names))


def derive_seed(seed, *names):
    """Integer seed for a named substream, stable across runs."""
    return int(make_rng(seed, *names).integers(0, 2 ** 63 - 1))
