"""Timing and memoisation helpers.

This module provides:
1. A performance monitor that records wall time per named phase
2. A ``cached`` decorator for pure functions with hashable arguments
"""

from __future__ import annotations

import functools
import logging
import time
from threading import Lock, RLock
from typing import Any, Callable, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")


class PerformanceMonitor:
    """Monitor wall time of named phases."""

    def __init__(self) -> None:
        self._metrics: dict[str, list[float]] = {}
        self._lock = Lock()

    def time_operation(self, operation_name: str) -> _TimingContext:
        """Context manager for timing operations."""
        return _TimingContext(self, operation_name)

    def record_metric(self, name: str, value: float) -> None:
        """Record a performance metric."""
        with self._lock:
            self._metrics.setdefault(name, []).append(value)

    def total(self, name: str) -> float:
        """Summed seconds recorded for ``name`` (0 when never recorded)."""
        return float(sum(self._metrics.get(name, ())))

    def get_stats(self, operation_name: str) -> dict[str, float]:
        """Get statistics for an operation."""
        values = self._metrics.get(operation_name)
        if not values:
            return {}
        return {
            "count": len(values),
            "min": min(values),
            "max": max(values),
            "avg": sum(values) / len(values),
            "total": sum(values),
        }

    def get_all_stats(self) -> dict[str, dict[str, float]]:
        """Get statistics for all operations."""
        return {name: self.get_stats(name) for name in self._metrics}

    def clear_metrics(self) -> None:
        """Clear all recorded metrics."""
        with self._lock:
            self._metrics.clear()


class _TimingContext:
    """Context manager for timing operations."""

    def __init__(self, monitor: PerformanceMonitor, operation_name: str):
        self.monitor = monitor
        self.operation_name = operation_name
        self.start_time: float | None = None

    def __enter__(self) -> _TimingContext:
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        if self.start_time is not None:
            duration = time.perf_counter() - self.start_time
            self.monitor.record_metric(self.operation_name, duration)


# Global performance monitor
_monitor = PerformanceMonitor()


def get_monitor() -> PerformanceMonitor:
    """Get the global performance monitor."""
    return _monitor


def cached(func: Callable[..., T]) -> Callable[..., T]:
    """Memoise a pure function of hashable arguments.

    A per-key lock keeps concurrent first calls from computing the same value
    twice.
    """
    store: dict[Any, T] = {}
    key_locks: dict[Any, Lock] = {}
    lock_manager = RLock()

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> T:
        key = (args, tuple(sorted(kwargs.items())))
        if key in store:
            return store[key]

        with lock_manager:
            key_lock = key_locks.setdefault(key, Lock())

        with key_lock:
            if key in store:
                return store[key]
            result = func(*args, **kwargs)
            store[key] = result
            logger.debug("cached %s%r", func.__name__, args)
            return result

    wrapper.clear_cache = store.clear  # type: ignore[attr-defined]
    return wrapper


__all__ = ["PerformanceMonitor", "get_monitor", "cached"]
