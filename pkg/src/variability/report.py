"""Assembles analysis results into a writable report bundle.

A bundle is a summary dict (serialized as summary.json) plus named CSV
tables: hour-of-day warm-duration stats, hour-of-week unexpected-cold
rates, per-(workload, memory) ECDFs, the hourly decomposition, change
points, and outliers. Output is fully determined by the inputs — no
timestamps or environment data — so identical inputs give byte-identical
bundles.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Sequence

from . import __version__
from .decomposition import (
    DecompositionError,
    StlParams,
    TimeSeries,
    detect_change_points,
    detect_outliers,
    hourly_series,
    penalty_from_remainder,
    stl_decompose,
    trend_summary,
)
from .records import InvocationRecord, StartClass, classify
from .stats import (
    DEFAULT_COOLDOWN_S,
    StatsError,
    Z_95,
    bucket_stats,
    class_counts,
    degenerate_loop_ids,
    ecdf,
    relative_change,
    resolve_tz,
    select_valid_pairs,
    unexpected_cold_rates,
    unexpected_warm_rate,
)

SCHEMA = "variability-report/1"
SUMMARY_FILENAME = "summary.json"


@dataclass(frozen=True)
class PeriodWindows:
    """Local-time windows for the period rate summaries.

    Night wraps midnight (start hour >= end hour); working hours apply
    Monday through Friday. Hours are half-open: start inclusive, end
    exclusive.
    """

    night_start_h: int = 20
    night_end_h: int = 8
    working_start_h: int = 9
    working_end_h: int = 17

    def in_night(self, local: datetime) -> bool:
        h = local.hour
        if self.night_start_h <= self.night_end_h:
            return self.night_start_h <= h < self.night_end_h
        return h >= self.night_start_h or h < self.night_end_h

    def in_weekend(self, local: datetime) -> bool:
        return local.weekday() >= 5

    def in_working(self, local: datetime) -> bool:
        return local.weekday() < 5 and self.working_start_h <= local.hour < self.working_end_h

    def in_monday_working(self, local: datetime) -> bool:
        return local.weekday() == 0 and self.working_start_h <= local.hour < self.working_end_h


@dataclass
class ReportBundle:
    """summary.json content plus named CSV tables (header row included)."""

    summary: dict
    tables: dict[str, list[list]] = field(default_factory=dict)


def _table_name(stem: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9_.-]+", "-", stem)
    return f"{safe}.csv"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _stat_rows(stats, value_column: str) -> list[list]:
    rows = [["bucket_key", "n", value_column, "ci95_half_width"]]
    for s in stats:
        rows.append([s.bucket_key, s.n, s.mean, s.ci95_half_width])
    return rows


def _period_rates(
    records: Sequence[InvocationRecord],
    zone,
    windows: PeriodWindows,
    cooldown_s: float,
) -> dict:
    counters = {
        "night": [0, 0],
        "weekend": [0, 0],
        "working_hours": [0, 0],
        "monday_working_hours": [0, 0],
    }
    tests = {
        "night": windows.in_night,
        "weekend": windows.in_weekend,
        "working_hours": windows.in_working,
        "monday_working_hours": windows.in_monday_working,
    }
    for record in select_valid_pairs(records, cooldown_s):
        if record.call_index != 2:
            continue
        local = record.timestamp_utc.astimezone(zone)
        for name, test in tests.items():
            if test(local):
                counters[name][0] += 1
                if record.cold:
                    counters[name][1] += 1
    out = {}
    for name, (n, cold) in counters.items():
        if n == 0:
            out[name] = None
            continue
        p = cold / n
        ci = Z_95 * (p * (1.0 - p) / n) ** 0.5 if n >= 2 else None
        out[name] = {"rate": p, "n": n, "ci95_half_width": ci}
    return out


def _dominant_group(records: Sequence[InvocationRecord]) -> tuple[str, int] | None:
    counts: dict[tuple[str, int], int] = {}
    for record in records:
        if record.status == "ok" and classify(record) is StartClass.EXPECTED_WARM:
            key = (record.workload, record.memory_mb)
            counts[key] = counts.get(key, 0) + 1
    if not counts:
        return None
    return max(sorted(counts), key=lambda k: counts[k])


def build_report(
    records: Sequence[InvocationRecord],
    tz: str = "CET",
    cooldown_s: float = DEFAULT_COOLDOWN_S,
    windows: PeriodWindows | None = None,
    stl_params: StlParams | None = None,
    outlier_k: float = 4.0,
    change_penalty: float | None = None,
    seed: int | None = None,
    config_hash: str | None = None,
) -> ReportBundle:
    """Run the whole analysis pipeline over loaded records.

    Always produces the descriptive tables; the decomposition section is
    marked absent (with a warning in the summary) when the data cannot
    support it, rather than failing the report.
    """
    if not records:
        raise StatsError("no records to analyze")
    zone = resolve_tz(tz)
    windows = windows or PeriodWindows()
    warnings: list[str] = []
    tables: dict[str, list[list]] = {}
    table_index: dict[str, str] = {}

    valid = select_valid_pairs(records, cooldown_s)
    counts = class_counts(records, cooldown_s)
    ok_records = sum(1 for r in records if r.status == "ok")

    hod = bucket_stats(records, "hour_of_day", zone, cooldown_s)
    tables["hour_of_day_stats.csv"] = _stat_rows(hod, "mean_ms")
    table_index["hour_of_day_stats"] = "hour_of_day_stats.csv"
    if hod:
        rel_rows = [["bucket_key", "rel", "ci95_half_width"]]
        for r in relative_change(hod):
            rel_rows.append([r.bucket_key, r.rel, r.ci95_half_width])
        tables["hour_of_day_relative.csv"] = rel_rows
        table_index["hour_of_day_relative"] = "hour_of_day_relative.csv"

    how = unexpected_cold_rates(records, "hour_of_week", zone, cooldown_s)
    tables["hour_of_week_rates.csv"] = _stat_rows(how, "rate")
    table_index["hour_of_week_rates"] = "hour_of_week_rates.csv"

    groups: dict[tuple[str, int], list[float]] = {}
    for record in valid:
        if classify(record) is StartClass.EXPECTED_WARM:
            groups.setdefault((record.workload, record.memory_mb), []).append(
                record.billed_duration_ms
            )
    ecdf_tables = {}
    for (workload, memory_mb) in sorted(groups):
        name = _table_name(f"ecdf_{workload}_{memory_mb}mb")
        rows = [["x", "F"]]
        for point in ecdf(groups[(workload, memory_mb)]):
            rows.append([point.x, point.F])
        tables[name] = rows
        ecdf_tables[f"{workload}/{memory_mb}"] = name
    table_index.update({f"ecdf {k}": v for k, v in ecdf_tables.items()})

    try:
        uw_rate = unexpected_warm_rate(records, cooldown_s)
    except StatsError:
        uw_rate = None
        warnings.append("no successful first calls; unexpected-warm rate unavailable")

    trend_block = None
    decomposition_block = None
    group = _dominant_group(valid)
    if group is None:
        warnings.append("no expected-warm records; decomposition skipped")
    else:
        workload, memory_mb = group
        group_records = [
            r for r in records if r.workload == workload and r.memory_mb == memory_mb
        ]
        try:
            series = hourly_series(group_records, zone, cooldown_s=cooldown_s)
            decomposition = stl_decompose(series, period=24, params=stl_params)
            penalty = (
                change_penalty
                if change_penalty is not None
                else penalty_from_remainder(
                    decomposition.remainder, reference=decomposition.trend
                )
            )
            change_points = detect_change_points(decomposition.trend, penalty)
            outliers = detect_outliers(series, k=outlier_k)
            trend_block = trend_summary(decomposition.trend)
            trend_block["change_point_times"] = [
                series.time_at(i).isoformat() for i in change_points
            ]
            trend_block["outlier_times"] = [
                series.time_at(i).isoformat() for i in outliers
            ]
            decomposition_block = {
                "workload": workload,
                "memory_mb": memory_mb,
                "n_hours": len(series),
                "fill_fraction": series.fill_fraction,
                "period": decomposition.period,
                "change_point_penalty": penalty,
            }
            rows = [["index", "time", "y", "trend", "seasonal", "remainder", "filled"]]
            for i, value in enumerate(series.values):
                rows.append(
                    [
                        i,
                        series.time_at(i).isoformat(),
                        value,
                        decomposition.trend[i],
                        decomposition.seasonal[i],
                        decomposition.remainder[i],
                        series.filled[i],
                    ]
                )
            tables["decomposition.csv"] = rows
            table_index["decomposition"] = "decomposition.csv"
            cp_rows = [["index", "time"]]
            for i in change_points:
                cp_rows.append([i, series.time_at(i).isoformat()])
            tables["change_points.csv"] = cp_rows
            table_index["change_points"] = "change_points.csv"
            out_rows = [["index", "time"]]
            for i in outliers:
                out_rows.append([i, series.time_at(i).isoformat()])
            tables["outliers.csv"] = out_rows
            table_index["outliers"] = "outliers.csv"
        except DecompositionError as exc:
            warnings.append(f"decomposition unavailable: {exc}")

    summary = {
        "schema": SCHEMA,
        "tz": str(tz),
        "cooldown_s": cooldown_s,
        "counts": {
            "total_records": len(records),
            "ok_records": ok_records,
            "error_records": len(records) - ok_records,
            "degenerate_pairs": len(degenerate_loop_ids(records, cooldown_s)),
            "by_class": {cls.value: counts[cls] for cls in StartClass},
        },
        "unexpected_cold_rates": _period_rates(records, zone, windows, cooldown_s),
        "unexpected_warm_rate": uw_rate,
        "trend": trend_block,
        "decomposition": decomposition_block,
        "warnings": warnings,
        "tables": table_index,
        "provenance": {
            "config_hash": config_hash,
            "seed": seed,
            "tool_version": __version__,
        },
    }
    return ReportBundle(summary=summary, tables=tables)


def write_bundle(bundle: ReportBundle, out_dir: str | Path) -> list[Path]:
    """Write summary.json and every table; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rows in sorted(bundle.tables.items()):
        path = out / name
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for row in rows:
                writer.writerow([_fmt(cell) for cell in row])
        written.append(path)
    summary_path = out / SUMMARY_FILENAME
    summary_path.write_text(
        json.dumps(bundle.summary, indent=2) + "\n", encoding="utf-8"
    )
    written.append(summary_path)
    return written
