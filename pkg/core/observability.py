"""Observability layer for solver runs.

Provides:
- Structured logging keyed by run id, echoed to stderr above a threshold
- Counters, gauges and histograms for inner solves and outer iterations
- A ``timed`` decorator for wall-clock histograms
"""

from __future__ import annotations

import bisect
import functools
import json
import os
import sys
import threading
import time
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, TypeVar

UTC = timezone.utc  # datetime.UTC alias, absent before Python 3.11

LOG_LEVELS = {"DEBUG": 10, "INFO": 20, "WARNING": 30, "ERROR": 40}
LOG_LEVEL_ENV = "AUGLAG_LOG_LEVEL"


@dataclass
class HistogramBucket:
    upper_bound: float
    count: int


@dataclass
class HistogramMetric:
    """Histogram metric data."""

    name: str
    buckets: list[HistogramBucket]
    sum_value: float
    count: int
    labels: dict[str, str]


@dataclass
class _HistogramState:
    """Running bucket counts, sum and count; raw samples are not kept."""

    bounds: list[float]
    counts: list[int] = field(init=False)
    sum_value: float = 0.0
    count: int = 0

    def __post_init__(self) -> None:
        self.counts = [0] * len(self.bounds)

    def observe(self, value: float) -> None:
        i = bisect.bisect_left(self.bounds, value)
        if i < len(self.counts):
            self.counts[i] += 1
        self.sum_value += value
        self.count += 1


@dataclass
class LogEntry:
    """Structured log entry."""

    timestamp: str
    level: str
    message: str
    run_id: str
    service: str
    context: dict[str, Any]


class MetricsCollector:
    """Collects and stores metrics; safe to update from worker threads."""

    # Iteration-count buckets; solver counts span several decades.
    DEFAULT_BUCKETS: list[float] = [1, 10, 100, 1_000, 10_000, 100_000, 1_000_000]

    def __init__(self) -> None:
        self._counters: dict[str, float] = {}
        self._gauges: dict[str, float] = {}
        self._histograms: dict[str, _HistogramState] = {}
        self._lock = threading.Lock()

    def counter(
        self, name: str, labels: dict[str, str] | None = None, amount: float = 1
    ) -> None:
        """Increment a counter metric."""
        key = self._key(name, labels or {})
        with self._lock:
            self._counters[key] = self._counters.get(key, 0) + amount

    def gauge(
        self, name: str, value: float, labels: dict[str, str] | None = None
    ) -> None:
        key = self._key(name, labels or {})
        with self._lock:
            self._gauges[key] = value

    def histogram(
        self,
        name: str,
        value: float,
        labels: dict[str, str] | None = None,
        buckets: list[float] | None = None,
    ) -> None:
        """Record a histogram value."""
        key = self._key(name, labels or {})
        with self._lock:
            state = self._histograms.get(key)
            if state is None:
                state = _HistogramState(sorted(buckets or self.DEFAULT_BUCKETS))
                self._histograms[key] = state
            state.observe(value)

    def get_counter(self, name: str, labels: dict[str, str] | None = None) -> float:
        with self._lock:
            return self._counters.get(self._key(name, labels or {}), 0)

    def get_gauge(
        self, name: str, labels: dict[str, str] | None = None
    ) -> float | None:
        with self._lock:
            return self._gauges.get(self._key(name, labels or {}))

    def get_histogram(
        self, name: str, labels: dict[str, str] | None = None
    ) -> HistogramMetric | None:
        """Get histogram data; values above the last bucket are only in the sum."""
        key = self._key(name, labels or {})
        with self._lock:
            state = self._histograms.get(key)
            if state is None:
                return None
            buckets = [
                HistogramBucket(upper_bound=b, count=c)
                for b, c in zip(state.bounds, state.counts, strict=True)
            ]
            sum_value, count = state.sum_value, state.count

        return HistogramMetric(
            name=name,
            buckets=buckets,
            sum_value=sum_value,
            count=count,
            labels=labels or {},
        )

    def get_summary(self) -> dict[str, Any]:
        with self._lock:
            return {
                "counters": dict(self._counters),
                "gauges": dict(self._gauges),
                "histogram_count": {k: h.count for k, h in self._histograms.items()},
            }

    def reset(self) -> None:
        with self._lock:
            self._counters.clear()
            self._gauges.clear()
            self._histograms.clear()

    def _key(self, name: str, labels: dict[str, str]) -> str:
        """Create a unique key for metric lookup."""
        if not labels:
            return name
        label_str = ",".join(f"{k}={v}" for k, v in sorted(labels.items()))
        return f"{name}{{{label_str}}}"


def _threshold_from_env() -> int:
    name = os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()
    return LOG_LEVELS.get(name, LOG_LEVELS["WARNING"])


class StructuredLogger:
    """Structured logging with run ids.

    Every entry is retained in a bounded buffer; entries at or above the echo
    threshold are also written to stderr.
    """

    def __init__(
        self,
        service: str = "auglag",
        echo_level: str | None = None,
        max_entries: int = 5000,
    ) -> None:
        self._service = service
        self._entries: deque[LogEntry] = deque(maxlen=max_entries)
        self._echo_threshold = (
            LOG_LEVELS[echo_level.upper()] if echo_level else _threshold_from_env()
        )

    def log(self, level: str, message: str, run_id: str = "", **context: Any) -> None:
        entry = LogEntry(
            timestamp=datetime.now(UTC).isoformat(),
            level=level,
            message=message,
            run_id=run_id,
            service=self._service,
            context=context,
        )
        self._entries.append(entry)

        if LOG_LEVELS.get(level, 0) >= self._echo_threshold:
            context_str = json.dumps(context, default=str) if context else ""
            line = f"[{entry.timestamp}] {level}: {message} {context_str}"
            print(line, file=sys.stderr)

    def debug(self, message: str, run_id: str = "", **context: Any) -> None:
        self.log("DEBUG", message, run_id, **context)

    def info(self, message: str, run_id: str = "", **context: Any) -> None:
        self.log("INFO", message, run_id, **context)

    def warning(self, message: str, run_id: str = "", **context: Any) -> None:
        self.log("WARNING", message, run_id, **context)

    def error(self, message: str, run_id: str = "", **context: Any) -> None:
        self.log("ERROR", message, run_id, **context)

    def get_recent(self, level: str | None = None, limit: int = 100) -> list[LogEntry]:
        entries = list(self._entries)
        if level:
            entries = [e for e in entries if e.level == level]
        return entries[-limit:]


class Observability:
    """Main observability facade."""

    def __init__(self, echo_level: str | None = None) -> None:
        self.metrics = MetricsCollector()
        self.logger = StructuredLogger(echo_level=echo_level)

    def record_inner_solve(self, criterion: str, iters: int, success: bool) -> None:
        labels = {"criterion": criterion, "status": "ok" if success else "cap"}
        self.metrics.counter("inner_solves_total", labels)
        self.metrics.histogram("inner_iterations", iters, {"criterion": criterion})

    def record_outer_iteration(
        self, scheme: str, k: int, infeasibility: float, run_id: str = ""
    ) -> None:
        self.metrics.counter("outer_iterations_total", {"scheme": scheme})
        self.metrics.gauge("infeasibility", infeasibility, {"scheme": scheme})
        self.logger.debug(
            "outer iteration", run_id, scheme=scheme, k=k, infeasibility=infeasibility
        )

    def record_bound_violation(
        self,
        scheme: str,
        bound: str,
        certified: float,
        measured: float,
        run_id: str = "",
    ) -> None:
        labels = {"scheme": scheme, "bound": bound}
        self.metrics.counter("bound_violations_total", labels)
        self.logger.error(
            "bound violated",
            run_id,
            scheme=scheme,
            bound=bound,
            certified=certified,
            measured=measured,
        )

    def record_bench_instance(
        self, scheme: str, seed: int, n: int, ok: bool, duration_seconds: float
    ) -> None:
        labels = {"scheme": scheme, "status": "ok" if ok else "violation"}
        self.metrics.counter("bench_instances_total", labels)
        self.metrics.histogram(
            "bench_instance_seconds",
            duration_seconds,
            {"scheme": scheme},
            buckets=[0.01, 0.1, 1, 10, 100, 1000],
        )
        self.logger.info("bench instance", scheme=scheme, seed=seed, n=n, ok=ok)


# Type variable for the decorator
T = TypeVar("T", bound=Callable[..., Any])


def timed(
    metric_name: str, observability: Observability | None = None
) -> Callable[[T], T]:
    """Decorator to time function execution."""

    def decorator(func: T) -> T:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            start = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                obs = observability or _global_observability
                obs.metrics.histogram(
                    metric_name,
                    time.perf_counter() - start,
                    buckets=[0.001, 0.01, 0.1, 1, 10, 100],
                )

        return wrapper  # type: ignore[return-value]

    return decorator


# Global observability instance
_global_observability: Observability = Observability()


def get_observability() -> Observability:
    """Get the global observability instance."""
    return _global_observability
