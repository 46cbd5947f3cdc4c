"""Seed derivation: master seed -> per-task seeds by (task index, purpose tag).

Each task seed is ``SeedSequence(master, spawn_key=(index, crc32(tag)))``
collapsed to 64 bits, so a task's random stream depends only on its own
coordinates and never on scheduling order or thread count.
"""
import zlib

import numpy as np


def derive_seed(master: int, index: int, tag: str) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index), zlib.crc32(tag.encode())))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def task_rng(master: int, index: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, index, tag))


def random_signs(rng: np.random.Generator, size: int) -> np.ndarray:
    """Fair +-1 signs as int8."""
    return (rng.integers(0, 2, size=size, dtype=np.int8) * 2 - 1).astype(np.int8)
