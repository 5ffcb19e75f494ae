"""Deterministic chunked Monte Carlo driver.

Samples are processed in fixed-size chunks; each chunk accumulates its
partial result sequentially in sample order and partials are combined in
chunk order.  The reduction tree therefore depends only on the sample count,
never on the worker count, which makes every Monte Carlo result bitwise
reproducible for any `workers` value.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

CHUNK_SIZE = 32

T = TypeVar("T")


def chunk_ranges(total: int, chunk: int = CHUNK_SIZE) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]


def map_chunks(
    fn: Callable[[int, int], T], total: int, workers: int = 1
) -> Sequence[T]:
    """Apply fn(start, stop) to every chunk; results returned in chunk order."""
    ranges = chunk_ranges(total)
    if workers <= 1 or len(ranges) <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))
