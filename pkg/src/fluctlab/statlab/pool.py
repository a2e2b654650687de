"""Worker pool with deterministic, id-ordered merging."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "FLUCTLAB_THREADS"


def resolve_threads(requested: int | None = None) -> int:
    """Explicit request, else $FLUCTLAB_THREADS, else 1."""
    if requested is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        if not env:
            return 1
        try:
            requested = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if requested < 1:
        raise ValueError("thread count must be at least 1")
    return int(requested)


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """[fn(x) for x in items], evaluated on ``threads`` workers.

    Results come back in input order regardless of completion order; each
    task must own its mutable state (random streams are addressed by id).
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
