"""Tests for gbmask.telemetry: module-level helpers, the collector, and stage logging."""

from __future__ import annotations

import json
import logging
import threading

import pytest

from gbmask import telemetry
from gbmask.telemetry import _HISTOGRAM_MAX_SIZE, TelemetryCollector, stage

# ── Module-level convenience API ──────────────────────────────────────────


def test_counter_default_increment():
    telemetry.counter("sweep.cells")
    assert telemetry.get_all_metrics()["counters"]["sweep.cells"] == 1.0


def test_counter_with_labels():
    telemetry.counter("sweep.cells", labels={"scenario": "MASK_ONLY"})
    telemetry.counter("sweep.cells", labels={"scenario": "CT_ONLY"})
    total = telemetry.counter("sweep.cells", labels={"scenario": "MASK_ONLY"})
    assert total == 2.0
    counters = telemetry.get_all_metrics()["counters"]
    assert counters["sweep.cells{scenario=CT_ONLY}"] == 1.0


def test_label_key_is_order_independent():
    assert telemetry._label_key("m", {"a": "1", "b": "2"}) == telemetry._label_key("m", {"b": "2", "a": "1"})


def test_histogram_running_summary():
    telemetry.histogram("train.epoch_seconds", 1.0)
    telemetry.histogram("train.epoch_seconds", 3.0)
    snap = telemetry.histogram("train.epoch_seconds", 2.0)
    assert snap == {"count": 3, "total": 6.0, "mean": 2.0, "min": 1.0, "max": 3.0, "p50": 2.0, "p99": 3.0}
    assert set(snap) == set(telemetry.get_all_metrics()["histograms"]["train.epoch_seconds"])


def test_timer_records_even_on_exception():
    with pytest.raises(ValueError):
        with telemetry.timer("sweep.cell_seconds"):
            raise ValueError("boom")
    snap = telemetry.get_all_metrics()["histograms"]["sweep.cell_seconds"]
    assert snap["count"] == 1
    assert snap["min"] >= 0


def test_dump_json_writes_file(tmp_path):
    telemetry.counter("train.steps", value=5)
    path = tmp_path / "metrics.json"
    text = telemetry.dump_json(path)
    assert path.read_text() == text
    assert json.loads(text)["counters"]["train.steps"] == 5.0


def test_reset_clears_all():
    telemetry.counter("a")
    telemetry.histogram("b", 1.0)
    telemetry.reset()
    data = telemetry.get_all_metrics()
    assert data["counters"] == {} and data["histograms"] == {}


def test_concurrent_increments_are_not_lost():
    barrier = threading.Barrier(4)

    def bump():
        barrier.wait()
        for _ in range(1000):
            telemetry.counter("phantom.subjects")

    threads = [threading.Thread(target=bump) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert telemetry.get_collector().counter_value("phantom.subjects") == 4000.0


# ── TelemetryCollector ────────────────────────────────────────────────────


class TestCollector:
    def test_missing_values_are_zero(self):
        m = TelemetryCollector()
        assert m.counter_value("nope") == 0.0
        assert m.histogram_stats("nope")["count"] == 0

    def test_histogram_stats(self):
        m = TelemetryCollector()
        for v in [1.0, 2.0, 3.0, 4.0, 5.0]:
            m.observe("h", v)
        stats = m.histogram_stats("h")
        assert (stats["count"], stats["total"], stats["mean"], stats["min"], stats["max"]) == (5, 15.0, 3.0, 1.0, 5.0)
        assert stats["p50"] == 3.0

    def test_histogram_memory_is_bounded(self):
        m = TelemetryCollector()
        for i in range(_HISTOGRAM_MAX_SIZE + 500):
            m.observe("big", float(i))
        assert m.histogram_stats("big")["count"] == _HISTOGRAM_MAX_SIZE + 500
        assert len(m._histograms["big"].observations) <= _HISTOGRAM_MAX_SIZE

    def test_snapshot_and_reset(self):
        m = TelemetryCollector()
        m.inc("train.steps")
        snap = m.snapshot()
        assert snap["counters"] == {"train.steps": 1.0}
        assert snap["uptime_seconds"] >= 0
        m.reset()
        assert m.snapshot()["counters"] == {}


# ── stage() ───────────────────────────────────────────────────────────────


def test_stage_logs_start_and_done_with_fields(caplog):
    log = logging.getLogger("gbmask.test")
    with caplog.at_level(logging.INFO, logger="gbmask.test"):
        with stage(log, "train", scenario="MASK_ONLY", seed=None, n_train=4):
            pass
    messages = [r.getMessage() for r in caplog.records]
    assert messages[0] == "stage_start stage=train scenario=MASK_ONLY n_train=4"
    assert messages[1].startswith("stage_done stage=train elapsed=")
    assert messages[1].endswith("s scenario=MASK_ONLY n_train=4")


def test_stage_logs_done_when_block_raises(caplog):
    log = logging.getLogger("gbmask.test")
    with caplog.at_level(logging.INFO, logger="gbmask.test"):
        with pytest.raises(RuntimeError):
            with stage(log, "sweep"):
                raise RuntimeError("cell failed")
    assert "stage_done stage=sweep" in caplog.text
