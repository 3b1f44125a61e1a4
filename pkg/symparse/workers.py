from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def map_jobs(fn: Callable[[T], R], jobs: Sequence[T], threads: int) -> List[R]:
    """
    Ordered map over ``jobs``, on a thread pool when ``threads`` > 1.
    """
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]
