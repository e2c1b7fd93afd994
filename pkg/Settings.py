import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar('T')
R = TypeVar('R')

THREADS_ENV = 'SPECFIT_THREADS'
LOG_DIR_ENV = 'SPECFIT_LOG_DIR'


def thread_count() -> int:
    """Worker thread cap from SPECFIT_THREADS (0 or unset means serial)."""
    raw = os.getenv(THREADS_ENV, '0').strip()
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a non-negative integer, got {raw!r}")
    if threads < 0:
        raise ValueError(f"{THREADS_ENV} must be a non-negative integer, got {raw!r}")
    return threads


def log_dir() -> str:
    return os.getenv(LOG_DIR_ENV, 'logs')


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """Map fn over items, in order, on at most `threads` worker threads.

    Results are returned in input order regardless of completion order, so
    callers see identical output whether or not threads are used.
    """
    items = list(items)
    if threads is None:
        threads = thread_count()
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
