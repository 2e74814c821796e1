"""Deterministic random streams.

Every stochastic operation draws from streams derived from a single 64-bit
master seed.  Samples are grouped into fixed-size blocks; block ``b`` of an
operation tagged ``tag`` uses a Philox generator keyed by
``SeedSequence(entropy=seed, spawn_key=(crc32(tag), b))``.  Because the block
size does not depend on the worker count, sample ``i`` is the same no matter
how the blocks are scheduled.
"""

from __future__ import annotations

import logging
import pickle
import zlib
from concurrent.futures import ProcessPoolExecutor

import numpy as np

BLOCK_SIZE = 1024


def tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str = "", *key: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, tag, *key)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(tag_id(tag), *map(int, key)))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(0 if rng is None else int(rng))


def block_layout(n_samples: int, block_size: int = BLOCK_SIZE):
    """List of ``(block_index, start, size)`` covering ``n_samples``."""
    out = []
    for b, start in enumerate(range(0, n_samples, block_size)):
        out.append((b, start, min(block_size, n_samples - start)))
    return out


def _call(args):
    fn, seed, tag, b, size = args
    return fn(stream(seed, tag, b), size)


def map_blocks(fn, n_samples: int, seed: int, tag: str, workers: int = 1, block_size: int = BLOCK_SIZE):
    """Run ``fn(rng, size)`` for every block and return the results in block order.

    Unpicklable ``fn`` (closures) fall back to serial execution, which gives
    the same results.
    """
    jobs = [(fn, seed, tag, b, size) for b, _, size in block_layout(n_samples, block_size)]
    if workers > 1 and len(jobs) > 1:
        try:
            pickle.dumps(fn)
        except (pickle.PicklingError, AttributeError, TypeError):
            logging.getLogger(__name__).warning("task is not picklable; running blocks serially")
            workers = 1
    if workers <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))
