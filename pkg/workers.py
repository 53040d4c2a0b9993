"""
Process-pool fan-out for the per-source build phases and the verification
sweeps. Workers are forked, so the read-only indices handed over as `state`
are inherited by each child instead of being pickled per task.
"""
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor as Pool
from functools import partial
from typing import Any, Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')

_state: Any = None


def _install(state):
    global _state
    _state = state


def _call(fn: Callable[[Any, T], Any], item: T):
    return fn(_state, item)


def fan_out(fn: Callable[[Any, T], Any], items: Iterable[T], state: Any, jobs: int = 1) -> List:
    """[fn(state, item) for item in items], spread over `jobs` forked workers.

    `fn` must be a module-level function. Results keep the order of `items`.
    """
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(state, item) for item in items]
    try:
        context = multiprocessing.get_context('fork')
    except ValueError:
        logger.warning("fork start method unavailable, running serially")
        return [fn(state, item) for item in items]
    chunksize = max(1, len(items) // (4 * jobs))
    with Pool(max_workers=jobs, mp_context=context, initializer=_install, initargs=(state,)) as p:
        return list(p.map(partial(_call, fn), items, chunksize=chunksize))
