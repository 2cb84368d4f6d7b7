"""
Counter-based random streams for reproducible Monte Carlo

Every batch of draws gets its own Philox stream keyed by (seed, tag, batch),
so estimates do not depend on how batches are spread over workers.
"""

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar, Union

import numpy as np

T = TypeVar("T")

DEFAULT_BATCH = 1 << 15


def _key_part(part: Union[int, str]) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def stream(seed: int, *key: Union[int, str]) -> np.random.Generator:
    """Return the generator of sub-stream `key` under `seed`."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def batch_sizes(total: int, batch: int = DEFAULT_BATCH) -> List[int]:
    """Split `total` draws into fixed-size batches (last one may be short)."""
    if total < 1:
        raise ValueError("total must be positive")
    full, rest = divmod(total, batch)
    return [batch] * full + ([rest] if rest else [])


def map_batches(
    work: Callable[[np.random.Generator, int], T],
    total: int,
    seed: int,
    tag: str,
    workers: int = 1,
    batch: int = DEFAULT_BATCH,
) -> List[T]:
    """Run `work(rng, size)` on every batch and return results in batch order."""
    sizes = batch_sizes(total, batch)
    jobs = [(stream(seed, tag, b), size) for b, size in enumerate(sizes)]
    if workers <= 1 or len(jobs) == 1:
        return [work(rng, size) for rng, size in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: work(*job), jobs))
