"""Small shared helpers: worker-pool plumbing and float formatting."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

THREADS_ENV_VAR = "MMDESIGN_THREADS"


def resolve_threads(requested: int | None = None) -> int:
    """Worker-pool size: explicit argument, else MMDESIGN_THREADS, else the
    available hardware parallelism."""
    if requested is not None:
        if requested < 1:
            raise ValueError("thread count must be >= 1")
        return requested
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}") from exc
        if n < 1:
            raise ValueError(f"{THREADS_ENV_VAR} must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Order-preserving map over independent pure tasks.

    Results are identical for any pool size; numpy releases the GIL inside the
    dominant matrix products, so threads give real speedup.
    """
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def fmt_float(x: float) -> str:
    """Deterministic float rendering for CSV/report output."""
    return format(float(x), ".12g")


def mean_and_stderr(values: Iterable[float]) -> tuple[float, float]:
    """Sample mean and standard error (ddof=1); stderr 0 for n < 2."""
    vals = [float(v) for v in values]
    n = len(vals)
    if n == 0:
        raise ValueError("need at least one value")
    mean = sum(vals) / n
    if n == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in vals) / (n - 1)
    return mean, (var / n) ** 0.5
