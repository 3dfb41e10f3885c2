"""Order-preserving process-pool map.

Work units are independent and results come back in submission order, so
the worker count changes wall time only.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable


def check_jobs(jobs) -> int:
    try:
        jobs = int(jobs)
    except (TypeError, ValueError):
        raise ValueError(f"jobs must be an integer >= 1, got {jobs!r}") from None
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    return jobs


def map_ordered(fn: Callable, items: Iterable, jobs: int = 1, chunksize: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally spread over ``jobs`` processes.

    ``fn`` and the items must be picklable when ``jobs > 1``.
    """
    jobs = check_jobs(jobs)
    items = list(items)
    if jobs == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
