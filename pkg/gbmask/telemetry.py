"""In-process counters and histograms for training runs and sweeps.

Thread-safe via a single lock; sweep cells running on a thread pool share the
collector.  Two API styles:

- Class-based: ``get_collector()`` returns the ``TelemetryCollector`` singleton
- Module-level convenience: ``counter()``, ``histogram()``, ``timer()``, etc.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections.abc import Iterator, Mapping
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TypedDict

# Maximum number of observations kept per histogram.
_HISTOGRAM_MAX_SIZE = 1000

Labels = Mapping[str, str]


class HistogramSnapshot(TypedDict):
    count: int
    total: float
    mean: float
    min: float
    max: float
    p50: float
    p99: float


class TelemetrySnapshot(TypedDict):
    counters: dict[str, float]
    histograms: dict[str, HistogramSnapshot]


_EMPTY_HISTOGRAM: HistogramSnapshot = {
    "count": 0,
    "total": 0.0,
    "mean": 0.0,
    "min": 0.0,
    "max": 0.0,
    "p50": 0.0,
    "p99": 0.0,
}


@dataclass
class _Histogram:
    observations: list[float] = field(default_factory=list)
    count: int = 0
    total: float = 0.0

    def observe(self, value: float) -> None:
        self.count += 1
        self.total += value
        if len(self.observations) >= _HISTOGRAM_MAX_SIZE:
            # drop the oldest quarter
            self.observations = self.observations[_HISTOGRAM_MAX_SIZE // 4 :]
        self.observations.append(value)

    def stats(self) -> HistogramSnapshot:
        obs = sorted(self.observations)
        n = len(obs)
        return {
            "count": self.count,
            "total": self.total,
            "mean": self.total / self.count,
            "min": obs[0],
            "max": obs[-1],
            "p50": obs[n // 2],
            "p99": obs[min(int(n * 0.99), n - 1)],
        }


class TelemetryCollector:
    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._counters: dict[str, float] = {}
        self._histograms: dict[str, _Histogram] = {}
        self._start_time = time.monotonic()

    def inc(self, name: str, value: float = 1.0) -> None:
        with self._lock:
            self._counters[name] = self._counters.get(name, 0.0) + value

    def counter_value(self, name: str) -> float:
        with self._lock:
            return self._counters.get(name, 0.0)

    def observe(self, name: str, value: float) -> None:
        with self._lock:
            self._histograms.setdefault(name, _Histogram()).observe(value)

    def histogram_stats(self, name: str) -> HistogramSnapshot:
        with self._lock:
            h = self._histograms.get(name)
            if not h or h.count == 0:
                return _EMPTY_HISTOGRAM.copy()
            return h.stats()

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            return {
                "uptime_seconds": time.monotonic() - self._start_time,
                "counters": dict(self._counters),
                "histograms": {k: h.stats() for k, h in self._histograms.items() if h.count},
            }

    def reset(self) -> None:
        with self._lock:
            self._counters.clear()
            self._histograms.clear()
            self._start_time = time.monotonic()


_collector = TelemetryCollector()


def get_collector() -> TelemetryCollector:
    return _collector


def _label_key(name: str, labels: Labels | None = None) -> str:
    if not labels:
        return name
    ordered = ",".join(f"{key}={value}" for key, value in sorted(labels.items()))
    return f"{name}{{{ordered}}}"


def counter(name: str, *, value: float = 1.0, labels: Labels | None = None) -> float:
    key = _label_key(name, labels)
    _collector.inc(key, value)
    return _collector.counter_value(key)


def histogram(name: str, value: float, *, labels: Labels | None = None) -> HistogramSnapshot:
    key = _label_key(name, labels)
    _collector.observe(key, value)
    return _collector.histogram_stats(key)


@contextmanager
def timer(name: str, *, labels: Labels | None = None) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    finally:
        histogram(name, time.perf_counter() - start, labels=labels)


def get_all_metrics() -> TelemetrySnapshot:
    snap = _collector.snapshot()
    return {"counters": snap["counters"], "histograms": snap["histograms"]}


def dump_json(path: str | Path | None = None) -> str:
    payload = json.dumps(get_all_metrics(), indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(payload, encoding="utf-8")
    return payload


def reset() -> None:
    _collector.reset()


def _stage_fields(**fields: object) -> str:
    return "".join(f" {key}={value}" for key, value in fields.items() if value is not None)


@contextmanager
def stage(logger: logging.Logger, name: str, **fields: object) -> Iterator[None]:
    """Log ``stage_start`` / ``stage_done elapsed=...`` around a block of work."""
    started = time.monotonic()
    suffix = _stage_fields(**fields)
    logger.info("stage_start stage=%s%s", name, suffix)
    try:
        yield
    finally:
        logger.info("stage_done stage=%s elapsed=%.3fs%s", name, time.monotonic() - started, suffix)
