"""
Parallel building blocks used across the pipeline.

Frame-level work (simulating a frame, assembling a network input,
matching detections) is independent per frame, so these helpers fan it out
over the shared Executor and always return results in input order.

Note on Performance:
    Threads help when the per-item work runs inside numpy (which releases
    the GIL for most array kernels). Pure-Python per-item work is better
    served by ``use_processes=True``.
"""

import logging
import time
from typing import Callable, Iterable, Optional, Sequence

from .config import get_chunk_size, get_worker_count
from .executor import Executor

logger = logging.getLogger(__name__)

_CHUNK_SIZE_CACHE = {}


def _calculate_optimal_chunk_size(iterable_size: int, operation_type: str = "default") -> int:
    """Calculate a chunk size from the dataset size and worker count."""
    workers = get_worker_count()
    cache_key = (iterable_size, operation_type, workers)
    if cache_key in _CHUNK_SIZE_CACHE:
        return _CHUNK_SIZE_CACHE[cache_key]

    if iterable_size < 1000:
        chunk_size = max(1, iterable_size // workers)
    elif iterable_size < 10000:
        chunk_size = max(100, iterable_size // (workers * 2))
    else:
        chunk_size = max(500, iterable_size // (workers * 4))

    if len(_CHUNK_SIZE_CACHE) < 100:
        _CHUNK_SIZE_CACHE[cache_key] = chunk_size

    return chunk_size


def _resolve_chunk_size(items: Sequence, chunk_size: Optional[int], operation_type: str) -> int:
    if chunk_size:
        return chunk_size
    if get_chunk_size():
        return get_chunk_size()
    return _calculate_optimal_chunk_size(len(items), operation_type)


def parallel_map(func: Callable, iterable: Iterable, chunk_size: Optional[int] = None,
                 max_workers: Optional[int] = None, use_processes: bool = False) -> list:
    """
    Apply a function to every item of an iterable in parallel.

    Args:
        func: Function to apply to each item
        iterable: Iterable to process
        chunk_size: Items per task for process pools (auto-calculated if None)
        max_workers: Worker count, defaults to the global setting
        use_processes: Run in a process pool (func and items must pickle)

    Returns:
        List of results, in input order

    Example:
        >>> from spadvision import parallel_map
        >>> parallel_map(lambda x: x * x, range(5))
        [0, 1, 4, 9, 16]
    """
    items = iterable if isinstance(iterable, (list, tuple)) else list(iterable)
    if not items:
        return []
    workers = max_workers or get_worker_count()
    if workers == 1 or len(items) == 1:
        return [func(item) for item in items]
    chunk_size = _resolve_chunk_size(items, chunk_size, "map")
    with Executor(workers, use_processes=use_processes) as executor:
        return executor.map(func, items, chunksize=chunk_size)


class ProgressTracker:
    """
    Progress reporting through the logging system.

    Lines are rate-limited so long loops do not flood the log.
    """

    def __init__(self, total: Optional[int] = None, desc: str = "Processing",
                 interval: float = 0.5, log: logging.Logger = logger):
        """
        Initialize progress tracker.

        Args:
            total: Total number of items to process
            desc: Description for the progress line
            interval: Minimum seconds between two progress lines
            log: Logger receiving the progress lines
        """
        self.total = total
        self.desc = desc
        self.completed = 0
        self.start_time = time.perf_counter()
        self._interval = interval
        self._last_update = 0.0
        self._log = log

    def update(self, n: int = 1) -> None:
        """Update progress by n items."""
        self.completed += n
        now = time.perf_counter()
        if now - self._last_update > self._interval:
            self._display_progress()
            self._last_update = now

    def close(self) -> None:
        """Log the final completion line."""
        elapsed = time.perf_counter() - self.start_time
        rate = self.completed / elapsed if elapsed > 0 else 0.0
        self._log.info("%s complete: %d items in %.2fs (%.1f items/s)",
                       self.desc, self.completed, elapsed, rate)

    def _display_progress(self) -> None:
        if self.total:
            percentage = 100.0 * self.completed / self.total
            self._log.info("%s: %d/%d (%.1f%%)", self.desc, self.completed, self.total, percentage)
        else:
            elapsed = time.perf_counter() - self.start_time
            rate = self.completed / elapsed if elapsed > 0 else 0.0
            self._log.info("%s: %d items (%.1f items/s)", self.desc, self.completed, rate)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        del exc_value, traceback
        if exc_type is None:
            self.close()
        return False


__all__ = [
    "parallel_map",
    "ProgressTracker",
]
