"""Deterministic seeding and the worker pool.

All fan-out uses counter-based seed derivation: the seed of task i in
stream k is SeedSequence(master, spawn_key=(k, i)).  Results never depend
on scheduling or the worker count, only on (master seed, stream, index).
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

# fixed stream ids, one per independent consumer of randomness
STREAM_FIELD = 1
STREAM_CHAIN = 2
STREAM_PILOT = 3
STREAM_ABC = 4
STREAM_PREDICTIVE = 5
STREAM_TABLE = 6
STREAM_FOREST = 7
STREAM_FOLDS = 8
STREAM_TRACE = 9


def seed_sequence(master_seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))


def rng_for(master_seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master_seed, *path))


def int_seed(master_seed: int, *path: int) -> int:
    """A single 32-bit seed derived from (master, path); for numba kernels."""
    return int(seed_sequence(master_seed, *path).generate_state(1, np.uint32)[0])


def parallel_map(fn, items, workers: int = 1, chunksize: int = 1) -> list:
    """Apply fn over items, in order.  workers <= 1 runs inline.

    fn and items must be picklable (top-level functions / partials of them)
    when workers > 1.  Output order always matches input order.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
