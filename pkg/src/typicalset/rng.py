"""Seeded random-stream helpers.

All randomness in this package flows through 64-bit seeds and the Philox
counter-based bit generator. Internal streams are derived from a parent
seed plus a short path of labels, so results never depend on evaluation
order, chunking, or parallelism.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["make_rng", "derive_seed"]

_SEED_MASK = (1 << 64) - 1


def _path_word(part) -> int:
    # spawn_key entries must be non-negative 32-bit words
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def make_rng(seed: int) -> np.random.Generator:
    """Return the package-standard generator for a 64-bit seed."""
    ss = np.random.SeedSequence(int(seed) & _SEED_MASK)
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path) -> int:
    """Derive a child 64-bit seed from ``seed`` and a label path.

    The same (seed, path) pair always yields the same child; distinct
    paths yield statistically independent streams. Path parts may be ints
    or strings.
    """
    key = tuple(_path_word(p) for p in path)
    ss = np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])
