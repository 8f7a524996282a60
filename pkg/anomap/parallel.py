"""
Thread-pool helpers honouring the ANOMAP_THREADS cap.

Work items are pure; results are always returned in submission order, so a
parallel run matches a sequential one exactly.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

from .logging_config import get_logger

log = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    default = os.cpu_count() or 1
    raw = os.getenv("ANOMAP_THREADS")
    if raw is None or raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        log.warning("Invalid ANOMAP_THREADS value %r, using %s", raw, default)
        return default
    if n <= 0:
        log.warning("ANOMAP_THREADS must be positive, using %s", default)
        return default
    return n


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    items = list(items)
    workers = thread_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
