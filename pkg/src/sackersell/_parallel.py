"""Order-preserving parallel map over independent work items."""
from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_TASK: tuple[Callable, Sequence] | None = None


def _run(i: int):
    fn, items = _TASK
    return fn(items[i])


def pmap(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """``[fn(x) for x in items]``, optionally in up to ``jobs`` forked workers.

    Items are handed to workers by index through fork inheritance, so
    neither ``fn`` nor the items need to be picklable; results do.
    Results are returned in input order regardless of completion order.
    """
    global _TASK
    items = list(items)
    if jobs <= 1 or len(items) <= 1 or "fork" not in mp.get_all_start_methods():
        return [fn(x) for x in items]
    _TASK = (fn, items)
    try:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=min(jobs, len(items)), mp_context=ctx) as ex:
            return list(ex.map(_run, range(len(items))))
    finally:
        _TASK = None
