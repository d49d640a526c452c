"""Replica-block parallelism with a deterministic merge order."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

DEFAULT_BLOCK = 1 << 14


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("KINETIC_BRW_THREADS", "1"))
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def blocks(n: int, block: int = DEFAULT_BLOCK) -> list[tuple[int, int]]:
    """Fixed [start, stop) ranges; the partition never depends on thread count."""
    return [(s, min(s + block, n)) for s in range(0, n, block)]


def map_blocks(fn: Callable[[int, int], T], n: int, block: int = DEFAULT_BLOCK, threads: int | None = None) -> list[T]:
    """``fn(start, stop)`` over fixed blocks, results returned in block order."""
    parts = blocks(n, block)
    threads = resolve_threads(threads)
    if threads == 1 or len(parts) == 1:
        return [fn(a, b) for a, b in parts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), parts))
