"""Worker-pool helpers; `WECROM_THREADS` caps parallelism (0 or unset = auto)."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    raw = os.environ.get("WECROM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"WECROM_THREADS must be an integer, got {raw!r}") from None
    if n <= 0:
        return max(os.cpu_count() or 1, 1)
    return n


def parallel_map(fn, items):
    """Order-preserving map over a bounded thread pool."""
    items = list(items)
    workers = min(worker_count(), max(len(items), 1))
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
