"""Descriptive statistics over invocation records.

Bucketed warm-duration aggregates with normal-approximation confidence
intervals, mean-normalized relative change, empirical CDFs, and
unexpected-cold / unexpected-warm start rates.

All operations exclude error records (and their pair partners) and
degenerate pairs — loops whose second call landed a full cooldown or more
after the first, voiding the should-be-warm assumption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, tzinfo
from typing import Iterable, NamedTuple, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from .records import InvocationRecord, StartClass, classify

BUCKETINGS = ("hour_of_day", "hour_of_week")
DEFAULT_COOLDOWN_S = 1200.0
Z_95 = 1.96


class StatsError(Exception):
    """Invalid input to a statistics operation."""


@dataclass(frozen=True)
class BucketStat:
    """Aggregate for one local-time bucket.

    ``bucket_key`` is hour-of-day (0–23) or hour-of-week (0–167, Monday
    00:00 = 0). ``mean`` is a duration in ms or a rate in [0, 1] depending
    on the producing operation. ``ci95_half_width`` is None when n < 2.
    """

    bucket_key: int
    n: int
    mean: float
    ci95_half_width: float | None

    def interval(self, lo_clamp: float | None = None, hi_clamp: float | None = None):
        """(lower, upper) 95% bounds, optionally clamped (e.g. to [0, 1] for rates)."""
        half = self.ci95_half_width or 0.0
        lo, hi = self.mean - half, self.mean + half
        if lo_clamp is not None:
            lo = max(lo, lo_clamp)
        if hi_clamp is not None:
            hi = min(hi, hi_clamp)
        return lo, hi


@dataclass(frozen=True)
class RelativeBucket:
    """A bucket mean normalized to the weighted overall mean."""

    bucket_key: int
    rel: float
    ci95_half_width: float | None


class EcdfPoint(NamedTuple):
    x: float
    F: float


def resolve_tz(tz: str | tzinfo) -> tzinfo:
    if isinstance(tz, tzinfo):
        return tz
    try:
        return ZoneInfo(tz)
    except Exception as exc:
        raise StatsError(f"unknown timezone {tz!r}") from exc


def bucket_key_for(when_utc: datetime, bucketing: str, zone: tzinfo) -> int:
    local = when_utc.astimezone(zone)
    if bucketing == "hour_of_day":
        return local.hour
    return local.weekday() * 24 + local.hour


def _check_bucketing(bucketing: str) -> None:
    if bucketing not in BUCKETINGS:
        raise StatsError(f"bucketing must be one of {BUCKETINGS}, got {bucketing!r}")


def degenerate_loop_ids(
    records: Iterable[InvocationRecord], cooldown_s: float = DEFAULT_COOLDOWN_S
) -> set[str]:
    """Loops whose second call arrived >= cooldown_s after the first.

    By then the platform may legitimately have reclaimed the instance, so
    the pair tells us nothing about unexpected recycling.
    """
    by_loop: dict[str, dict[int, datetime]] = {}
    for record in records:
        if record.status == "ok":
            by_loop.setdefault(record.loop_id, {})[record.call_index] = record.timestamp_utc
    degenerate = set()
    for loop_id, calls in by_loop.items():
        if 1 in calls and 2 in calls:
            gap = (calls[2] - calls[1]).total_seconds()
            if gap >= cooldown_s:
                degenerate.add(loop_id)
    return degenerate


def select_valid_pairs(
    records: Sequence[InvocationRecord], cooldown_s: float = DEFAULT_COOLDOWN_S
) -> list[InvocationRecord]:
    """Records usable for statistics.

    Drops every record of a loop that contains an error record, and every
    record of a degenerate pair. Single-call loops (burst bodies) pass
    through as long as the call itself succeeded.
    """
    failed_loops = {r.loop_id for r in records if r.status != "ok"}
    bad_loops = failed_loops | degenerate_loop_ids(records, cooldown_s)
    kept = [r for r in records if r.loop_id not in bad_loops]
    kept.sort(key=lambda r: (r.timestamp_utc, r.loop_id, r.call_index))
    return kept


def class_counts(
    records: Sequence[InvocationRecord], cooldown_s: float = DEFAULT_COOLDOWN_S
) -> dict[StartClass, int]:
    """Start-class counts: all ok first calls; ok second calls of
    non-degenerate pairs."""
    degenerate = degenerate_loop_ids(records, cooldown_s)
    counts = {cls: 0 for cls in StartClass}
    for record in records:
        if record.status != "ok":
            continue
        if record.call_index == 2 and record.loop_id in degenerate:
            continue
        counts[classify(record)] += 1
    return counts


def _mean_ci(values: Sequence[float]) -> tuple[float, float | None]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None
    sd = float(arr.std(ddof=1))
    return mean, Z_95 * sd / math.sqrt(arr.size)


def bucket_stats(
    records: Sequence[InvocationRecord],
    bucketing: str = "hour_of_day",
    tz: str | tzinfo = "CET",
    cooldown_s: float = DEFAULT_COOLDOWN_S,
) -> list[BucketStat]:
    """Mean billed duration of expected-warm calls per local-time bucket."""
    _check_bucketing(bucketing)
    zone = resolve_tz(tz)
    buckets: dict[int, list[float]] = {}
    for record in select_valid_pairs(records, cooldown_s):
        if classify(record) is not StartClass.EXPECTED_WARM:
            continue
        key = bucket_key_for(record.timestamp_utc, bucketing, zone)
        buckets.setdefault(key, []).append(record.billed_duration_ms)
    out = []
    for key in sorted(buckets):
        mean, ci = _mean_ci(buckets[key])
        out.append(BucketStat(key, len(buckets[key]), mean, ci))
    return out


def relative_change(stats: Sequence[BucketStat]) -> list[RelativeBucket]:
    """Normalize bucket means to the n-weighted overall mean.

    rel = (mean - overall) / overall; the n-weighted average of rel is 0 by
    construction. CI half-widths are scaled by the same 1/overall factor.
    """
    if not stats:
        raise StatsError("relative_change requires at least one bucket")
    total_n = sum(s.n for s in stats)
    overall = sum(s.n * s.mean for s in stats) / total_n
    if overall == 0:
        raise StatsError("overall mean is zero; relative change is undefined")
    scale = abs(overall)
    return [
        RelativeBucket(
            s.bucket_key,
            (s.mean - overall) / overall,
            None if s.ci95_half_width is None else s.ci95_half_width / scale,
        )
        for s in stats
    ]


def ecdf(values: Sequence[float]) -> list[EcdfPoint]:
    """Empirical CDF: sorted unique x with F(x) = #(values <= x) / N."""
    if len(values) == 0:
        raise StatsError("ecdf requires at least one value")
    ordered = sorted(float(v) for v in values)
    n = len(ordered)
    points = []
    for i, x in enumerate(ordered):
        if i + 1 < n and ordered[i + 1] == x:
            continue  # keep the last occurrence so F counts all ties
        points.append(EcdfPoint(x, (i + 1) / n))
    return points


def unexpected_cold_rates(
    records: Sequence[InvocationRecord],
    bucketing: str = "hour_of_week",
    tz: str | tzinfo = "CET",
    cooldown_s: float = DEFAULT_COOLDOWN_S,
) -> list[BucketStat]:
    """Per-bucket rate of second calls that came up cold.

    rate = UnexpectedCold / (UnexpectedCold + ExpectedWarm) over the valid,
    non-degenerate pairs; buckets without second calls are omitted.
    """
    _check_bucketing(bucketing)
    zone = resolve_tz(tz)
    totals: dict[int, int] = {}
    colds: dict[int, int] = {}
    for record in select_valid_pairs(records, cooldown_s):
        if record.call_index != 2:
            continue
        key = bucket_key_for(record.timestamp_utc, bucketing, zone)
        totals[key] = totals.get(key, 0) + 1
        if record.cold:
            colds[key] = colds.get(key, 0) + 1
    out = []
    for key in sorted(totals):
        n = totals[key]
        p = colds.get(key, 0) / n
        ci = Z_95 * math.sqrt(p * (1.0 - p) / n) if n >= 2 else None
        out.append(BucketStat(key, n, p, ci))
    return out


def proportion_with_ci(colds: int, total: int) -> BucketStat:
    """Single-window cold-start proportion as an (unkeyed) BucketStat."""
    if total <= 0:
        raise StatsError("proportion over an empty window")
    p = colds / total
    ci = Z_95 * math.sqrt(p * (1.0 - p) / total) if total >= 2 else None
    return BucketStat(0, total, p, ci)


def unexpected_warm_rate(
    records: Sequence[InvocationRecord], cooldown_s: float = DEFAULT_COOLDOWN_S
) -> float:
    """Share of first calls served warm despite the full cooldown."""
    firsts = [r for r in select_valid_pairs(records, cooldown_s) if r.call_index == 1]
    if not firsts:
        raise StatsError("no successful first calls to rate")
    warm = sum(1 for r in firsts if not r.cold)
    return warm / len(firsts)
