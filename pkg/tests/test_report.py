"""Report assembly: period windows, summary content, bundle serialization."""

from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone

import pytest
from conftest import make_record

from variability.report import (
    PeriodWindows,
    ReportBundle,
    build_report,
    write_bundle,
)
from variability.stats import StatsError

UTC = timezone.utc
T0 = datetime(2022, 12, 12, 0, 0, tzinfo=UTC)  # Monday


def _local(hour: int, weekday_offset: int = 0) -> datetime:
    return datetime(2022, 12, 12 + weekday_offset, hour, 30)


# --- period windows -----------------------------------------------------------


def test_night_window_wraps_midnight():
    w = PeriodWindows()  # 20:00-08:00
    assert w.in_night(_local(23))
    assert w.in_night(_local(0))
    assert w.in_night(_local(7))
    assert not w.in_night(_local(8))
    assert not w.in_night(_local(19))
    assert w.in_night(_local(20))


def test_non_wrapping_night_window():
    w = PeriodWindows(night_start_h=1, night_end_h=5)
    assert w.in_night(_local(1))
    assert w.in_night(_local(4))
    assert not w.in_night(_local(5))
    assert not w.in_night(_local(23))


def test_working_hours_window():
    w = PeriodWindows()
    assert w.in_working(_local(9))  # Monday 09:30
    assert w.in_working(_local(16))
    assert not w.in_working(_local(17))  # end-exclusive
    assert not w.in_working(_local(8))
    assert not w.in_working(_local(12, weekday_offset=5))  # Saturday noon


def test_weekend_and_monday_windows():
    w = PeriodWindows()
    assert w.in_weekend(_local(12, weekday_offset=5))  # Saturday
    assert w.in_weekend(_local(12, weekday_offset=6))  # Sunday
    assert not w.in_weekend(_local(12))
    assert w.in_monday_working(_local(10))
    assert not w.in_monday_working(_local(10, weekday_offset=1))  # Tuesday


# --- report content -----------------------------------------------------------


def _campaign_records():
    """72 hourly pairs; the pairs in hours 0 and 1 come back unexpectedly cold."""
    records = []
    for h in range(72):
        at = T0 + timedelta(hours=h)
        records.append(make_record(loop_id=f"l{h:04d}", at=at, call_index=1, cold=True))
        records.append(
            make_record(
                loop_id=f"l{h:04d}",
                at=at + timedelta(seconds=1),
                call_index=2,
                cold=h < 2,
                billed_duration_ms=100.0,
            )
        )
    # one loop that errored out on its second call
    records.append(make_record(loop_id="err", at=T0 + timedelta(hours=73), call_index=1))
    records.append(
        make_record(
            loop_id="err",
            at=T0 + timedelta(hours=73, seconds=1),
            call_index=2,
            status="error",
            instance_id="",
            cold=False,
            billed_duration_ms=0.0,
            handler_duration_ms=0.0,
        )
    )
    # one degenerate pair whose second call came far too late
    records.append(make_record(loop_id="slow", at=T0 + timedelta(hours=74), call_index=1))
    records.append(
        make_record(
            loop_id="slow", at=T0 + timedelta(hours=76), call_index=2, cold=True
        )
    )
    return records


def test_build_report_rejects_empty_input():
    with pytest.raises(StatsError):
        build_report([])


def test_summary_counts_and_classes():
    bundle = build_report(_campaign_records(), tz="CET")
    counts = bundle.summary["counts"]
    assert counts["total_records"] == 148
    assert counts["ok_records"] == 147
    assert counts["error_records"] == 1
    assert counts["degenerate_pairs"] == 1
    by_class = counts["by_class"]
    assert by_class["expected_cold"] == 74  # every ok first call
    assert by_class["expected_warm"] == 70
    assert by_class["unexpected_cold"] == 2
    assert by_class["unexpected_warm"] == 0


def test_summary_period_rates():
    bundle = build_report(_campaign_records(), tz="CET")
    rates = bundle.summary["unexpected_cold_rates"]
    # 72 hourly second calls Mon-Wed; 12 CET night hours per day -> n = 36,
    # and both unexpected colds (00:xx/01:xx UTC = 01:xx/02:xx CET) are night.
    assert rates["night"]["n"] == 36
    assert rates["night"]["rate"] == pytest.approx(2 / 36)
    assert rates["working_hours"]["n"] == 24
    assert rates["working_hours"]["rate"] == 0.0
    assert rates["monday_working_hours"]["n"] == 8
    assert rates["weekend"] is None  # no weekend in a Mon-Wed window


def test_summary_decomposition_and_trend_blocks():
    bundle = build_report(_campaign_records(), tz="CET")
    dec = bundle.summary["decomposition"]
    assert dec["workload"] == "float"
    assert dec["memory_mb"] == 128
    assert dec["n_hours"] == 70  # hours 2..71 carry expected-warm calls
    assert dec["period"] == 24
    assert dec["change_point_penalty"] > 0.0
    trend = bundle.summary["trend"]
    assert trend["min"] == pytest.approx(100.0, abs=0.5)
    assert trend["rel_change"] == pytest.approx(0.0, abs=0.01)
    assert trend["change_point_times"] == []
    assert trend["outlier_times"] == []
    assert bundle.summary["warnings"] == []


def test_explicit_change_penalty_is_recorded():
    bundle = build_report(_campaign_records(), change_penalty=1234.5)
    assert bundle.summary["decomposition"]["change_point_penalty"] == 1234.5


def test_tables_present_and_indexed():
    bundle = build_report(_campaign_records(), tz="CET")
    expected = {
        "hour_of_day_stats.csv",
        "hour_of_day_relative.csv",
        "hour_of_week_rates.csv",
        "ecdf_float_128mb.csv",
        "decomposition.csv",
        "change_points.csv",
        "outliers.csv",
    }
    assert set(bundle.tables) == expected
    assert set(bundle.summary["tables"].values()) == expected
    assert bundle.tables["decomposition.csv"][0] == [
        "index", "time", "y", "trend", "seasonal", "remainder", "filled",
    ]
    assert len(bundle.tables["decomposition.csv"]) == 71  # header + 70 hours
    assert bundle.tables["change_points.csv"] == [["index", "time"]]
    assert bundle.tables["outliers.csv"] == [["index", "time"]]


def test_dominant_group_drives_decomposition():
    records = _campaign_records()
    # a minority matrix group must not displace the float decomposition
    for h in range(6):
        at = T0 + timedelta(hours=h, minutes=10)
        records += [
            make_record(
                loop_id=f"m{h}", at=at, call_index=1, cold=True,
                function_name="matrix-512", workload="matrix", memory_mb=512,
            ),
            make_record(
                loop_id=f"m{h}", at=at + timedelta(seconds=1), call_index=2, cold=False,
                function_name="matrix-512", workload="matrix", memory_mb=512,
                billed_duration_ms=40.0,
            ),
        ]
    bundle = build_report(records)
    assert bundle.summary["decomposition"]["workload"] == "float"
    assert "ecdf_matrix_512mb.csv" in bundle.tables


def test_short_span_degrades_to_warning():
    records = _campaign_records()[: 2 * 30]  # 30 hourly pairs < 48 h
    bundle = build_report(records, tz="CET")
    assert bundle.summary["decomposition"] is None
    assert bundle.summary["trend"] is None
    assert any("decomposition unavailable" in w for w in bundle.summary["warnings"])
    assert "hour_of_day_stats.csv" in bundle.tables
    assert "decomposition.csv" not in bundle.tables


def test_provenance_passthrough():
    bundle = build_report(_campaign_records(), seed=42, config_hash="abc123")
    prov = bundle.summary["provenance"]
    assert prov["seed"] == 42
    assert prov["config_hash"] == "abc123"
    assert isinstance(prov["tool_version"], str) and prov["tool_version"]


# --- bundle writing -----------------------------------------------------------


def test_write_bundle_formats_and_round_trips(tmp_path):
    bundle = ReportBundle(
        summary={"schema": "variability-report/1", "x": 1.5, "flag": True},
        tables={
            "t.csv": [["a", "b", "c"], [1.5, None, True], [0.1, "text", False]],
        },
    )
    paths = write_bundle(bundle, tmp_path / "out")
    names = {p.name for p in paths}
    assert names == {"t.csv", "summary.json"}
    csv_text = (tmp_path / "out" / "t.csv").read_text()
    assert csv_text == "a,b,c\n1.5,,true\n0.1,text,false\n"
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["x"] == 1.5


def test_write_bundle_is_deterministic(tmp_path):
    records = _campaign_records()
    for i in (1, 2):
        bundle = build_report(records, tz="CET", seed=20221212, config_hash="h")
        write_bundle(bundle, tmp_path / f"run{i}")
    files1 = sorted((tmp_path / "run1").iterdir())
    files2 = sorted((tmp_path / "run2").iterdir())
    assert [p.name for p in files1] == [p.name for p in files2]
    for a, b in zip(files1, files2):
        assert a.read_bytes() == b.read_bytes()
