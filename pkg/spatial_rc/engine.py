"""
engine.py - Ordered parallel map over independent estimator units.

Every per-node NL fit, per-(node, delay) MC fit and per-(model, horizon)
readout fit is an independent pure computation. parallel_map runs them on a
thread pool (numpy/LAPACK release the GIL inside the solves) and returns the
results in input order, so any reduction done afterwards is order-fixed and
the output is identical to the sequential path.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "SPATIAL_RC_THREADS"


def resolve_threads(threads: Optional[int] = None) -> int:
    """
    Effective worker count.

    None defers to the SPATIAL_RC_THREADS environment variable; 0 (from
    either source) means one worker per CPU.
    """
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        threads = int(raw) if raw else 1
    if threads < 0:
        raise ValueError(f"threads must be >= 0, got {threads}")
    if threads == 0:
        threads = os.cpu_count() or 1
    return threads


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> list[R]:
    units = list(items)
    workers = min(resolve_threads(threads), max(len(units), 1))
    if workers <= 1:
        return [fn(unit) for unit in units]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, units))
