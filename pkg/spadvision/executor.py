"""
Task executor for frame-parallel work (simulation, evaluation, benchmarks).
"""
import atexit
import concurrent.futures
import logging
import threading
import typing

from .config import get_worker_count

logger = logging.getLogger(__name__)

# Pools are shared per (worker count, pool type) and live until exit
_POOLS: typing.Dict[tuple, concurrent.futures.Executor] = {}
_POOL_LOCK = threading.Lock()


class _InlineExecutor(concurrent.futures.Executor):
    """Runs tasks synchronously in the caller's thread (worker count 1)."""

    def submit(self, fn, /, *args, **kwargs):
        future = concurrent.futures.Future()
        try:
            future.set_result(fn(*args, **kwargs))
        except BaseException as exc:
            future.set_exception(exc)
        return future


def _get_pool(max_workers: int, use_processes: bool) -> concurrent.futures.Executor:
    key = (max_workers, use_processes)
    with _POOL_LOCK:
        pool = _POOLS.get(key)
        if pool is None:
            if max_workers == 1:
                pool = _InlineExecutor()
            elif use_processes:
                pool = concurrent.futures.ProcessPoolExecutor(max_workers)
            else:
                pool = concurrent.futures.ThreadPoolExecutor(
                    max_workers, thread_name_prefix="spadvision")
            _POOLS[key] = pool
            logger.debug("Started %s pool with %d workers",
                         "process" if use_processes else "thread", max_workers)
        return pool


@atexit.register
def shutdown_pools() -> None:
    """Shut down every shared pool."""
    with _POOL_LOCK:
        pools = list(_POOLS.values())
        _POOLS.clear()
    for pool in pools:
        pool.shutdown(wait=True)


class Executor(concurrent.futures.Executor):
    """Handle on a shared worker pool with ordered map; one worker runs inline."""

    def __init__(self, max_workers: typing.Optional[int] = None, use_processes: bool = False):
        """
        Initialize the executor.

        :param max_workers: Number of workers, defaults to the global worker count.
        :param use_processes: Use a process pool instead of threads.
        """
        super().__init__()
        self._max_workers = max_workers or get_worker_count()
        self._use_processes = use_processes
        self._executor = _get_pool(self._max_workers, use_processes)
        self._shutdown = False

    def submit(self, fn, /, *args, **kwargs):
        """
        Submit a task.

        :param fn: The function to execute.
        :return: A future representing the execution of the task.
        """
        if self._shutdown:
            raise RuntimeError("Cannot schedule new futures after shutdown")
        return self._executor.submit(fn, *args, **kwargs)

    def map(self, func: typing.Callable, iterable: typing.Iterable, chunksize: int = 1) -> list:
        """
        Map a function over an iterable, preserving input order.

        :param func: The function to apply to each item in the iterable.
        :param iterable: An iterable of items to process.
        :param chunksize: Items per submitted task (process pools only).
        :return: A list of results from applying the function to each item.
        """
        if self._shutdown:
            raise RuntimeError("Cannot schedule new futures after shutdown")
        if self._use_processes and self._max_workers > 1:
            return list(self._executor.map(func, iterable, chunksize=max(1, chunksize)))
        return list(self._executor.map(func, iterable))

    def shutdown(self, wait=True, *, cancel_futures=False):
        """
        Release this handle. The shared pool keeps serving other handles.
        """
        del wait, cancel_futures
        self._shutdown = True

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        del exc_type, exc_value, traceback
        self.shutdown()
        return False


__all__ = ["Executor", "shutdown_pools"]
