"""Seeded, purpose-split random streams.

Every consumer of randomness asks for a generator keyed by the run seed plus a
purpose label, so adding a new random draw in one place never shifts the
stream another place sees.
"""
import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def make_rng(seed, *purpose):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in purpose))
    return np.random.Generator(np.random.PCG64(ss))
