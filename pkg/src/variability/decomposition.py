"""Time-series analysis for hourly duration data.

Builds gap-checked hourly mean series from records, decomposes them into
trend + seasonal + remainder via an iterated LOESS procedure with a daily
period, finds level shifts in the trend with penalized exact change-point
search (PELT, L2 cost), flags hours deviating more than k interquartile
ranges from the overall mean, and summarizes the trend range.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .records import InvocationRecord, StartClass, classify
from .stats import DEFAULT_COOLDOWN_S, resolve_tz, select_valid_pairs

DEFAULT_MAX_GAP_H = 6
MIN_SERIES_HOURS = 48


class DecompositionError(Exception):
    """Invalid input to a decomposition operation."""


class InsufficientDataError(DecompositionError):
    """Not enough data to compute the requested analysis."""


class UnfillableGapError(DecompositionError):
    """A gap in the hourly series is too long to interpolate."""


@dataclass(frozen=True)
class TimeSeries:
    """An evenly spaced series; ``filled[i]`` marks gap-interpolated points."""

    start: datetime
    step_s: float
    values: tuple[float, ...]
    filled: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "filled", tuple(bool(f) for f in self.filled))
        if self.start.tzinfo is None:
            raise DecompositionError("series start must be timezone-aware")
        if self.step_s <= 0:
            raise DecompositionError("step_s must be positive")
        if len(self.values) != len(self.filled):
            raise DecompositionError("values and filled must have equal length")

    def __len__(self) -> int:
        return len(self.values)

    def time_at(self, index: int) -> datetime:
        return self.start + timedelta(seconds=index * self.step_s)

    @property
    def fill_fraction(self) -> float:
        return sum(self.filled) / len(self.filled) if self.filled else 0.0


@dataclass(frozen=True)
class Decomposition:
    """Additive split y = trend + seasonal + remainder with a daily period."""

    trend: tuple[float, ...]
    seasonal: tuple[float, ...]
    remainder: tuple[float, ...]
    period: int

    def __post_init__(self):
        object.__setattr__(self, "trend", tuple(float(v) for v in self.trend))
        object.__setattr__(self, "seasonal", tuple(float(v) for v in self.seasonal))
        object.__setattr__(self, "remainder", tuple(float(v) for v in self.remainder))
        if not (len(self.trend) == len(self.seasonal) == len(self.remainder)):
            raise DecompositionError("component lengths differ")
        if self.period < 2:
            raise DecompositionError("period must be at least 2")


def _smallest_odd_ge(x: float) -> int:
    k = math.ceil(x)
    return k if k % 2 == 1 else k + 1


@dataclass(frozen=True)
class StlParams:
    """Smoothing controls for the decomposition.

    ``n_i`` inner iterations, ``n_o`` robustness iterations, ``n_s`` seasonal
    span, ``n_l`` low-pass span (default: smallest odd >= period), ``n_t``
    trend span (default: smallest odd >= 1.5*period / (1 - 1.5/n_s)).
    Series with more than ``fill_fraction_max`` interpolated points are
    rejected rather than decomposed.
    """

    n_i: int = 2
    n_o: int = 1
    n_s: int = 25
    n_l: int | None = None
    n_t: int | None = None
    fill_fraction_max: float = 0.2

    def __post_init__(self):
        if self.n_i < 1:
            raise DecompositionError("n_i must be at least 1")
        if self.n_o < 0:
            raise DecompositionError("n_o must be non-negative")
        for name, value in (("n_s", self.n_s), ("n_l", self.n_l), ("n_t", self.n_t)):
            if value is not None and (value < 3 or value % 2 == 0):
                raise DecompositionError(f"{name} must be an odd integer >= 3, got {value}")
        if not 0 <= self.fill_fraction_max <= 1:
            raise DecompositionError("fill_fraction_max must be within [0, 1]")

    def resolved_n_l(self, period: int) -> int:
        return self.n_l if self.n_l is not None else _smallest_odd_ge(period)

    def resolved_n_t(self, period: int) -> int:
        if self.n_t is not None:
            return self.n_t
        return _smallest_odd_ge(1.5 * period / (1.0 - 1.5 / self.n_s))


def hourly_series(
    records: Sequence[InvocationRecord],
    tz="CET",
    max_gap_h: int = DEFAULT_MAX_GAP_H,
    cooldown_s: float = DEFAULT_COOLDOWN_S,
) -> TimeSeries:
    """Hourly mean billed duration of expected-warm calls.

    Hours are whole UTC epoch hours (step exactly 3600 s across DST); the
    returned start instant is expressed in ``tz``. Interior gaps up to
    ``max_gap_h`` hours are linearly interpolated and flagged; longer gaps
    raise, as does a span under two full days.
    """
    zone = resolve_tz(tz)
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for record in select_valid_pairs(records, cooldown_s):
        if classify(record) is not StartClass.EXPECTED_WARM:
            continue
        hour = int(record.timestamp_utc.timestamp() // 3600)
        sums[hour] = sums.get(hour, 0.0) + record.billed_duration_ms
        counts[hour] = counts.get(hour, 0) + 1
    if not counts:
        raise InsufficientDataError("no expected-warm records to aggregate")
    first, last = min(counts), max(counts)
    n = last - first + 1
    if n < MIN_SERIES_HOURS:
        raise InsufficientDataError(
            f"hourly series spans {n} hours; need at least {MIN_SERIES_HOURS}"
        )
    values = [math.nan] * n
    filled = [False] * n
    for hour, total in sums.items():
        values[hour - first] = total / counts[hour]

    def hour_label(index: int) -> str:
        when = datetime.fromtimestamp((first + index) * 3600.0, tz=zone)
        return when.isoformat()

    i = 0
    while i < n:
        if not math.isnan(values[i]):
            i += 1
            continue
        j = i
        while j < n and math.isnan(values[j]):
            j += 1
        run = j - i
        if run > max_gap_h:
            raise UnfillableGapError(
                f"gap of {run} hours from {hour_label(i)} to {hour_label(j - 1)} "
                f"exceeds max_gap_h={max_gap_h}"
            )
        left, right = values[i - 1], values[j]
        for k in range(i, j):
            frac = (k - (i - 1)) / (j - (i - 1))
            values[k] = left + (right - left) * frac
            filled[k] = True
        i = j
    start_local = datetime.fromtimestamp(first * 3600.0, tz=zone)
    return TimeSeries(start=start_local, step_s=3600.0, values=values, filled=filled)


# --- LOESS -----------------------------------------------------------------


def _tricube(u: np.ndarray) -> np.ndarray:
    return np.clip(1.0 - u**3, 0.0, None) ** 3


def _nearest_window(xs: np.ndarray, q: int, x0: float) -> tuple[int, int]:
    """Half-open index range of the q points in sorted xs nearest to x0."""
    n = len(xs)
    right = int(np.searchsorted(xs, x0))
    left = right
    while right - left < q:
        if left == 0:
            right += 1
        elif right == n:
            left -= 1
        elif x0 - xs[left - 1] <= xs[right] - x0:
            left -= 1
        else:
            right += 1
    return left, right


def _fit_at(
    xs: np.ndarray, ys: np.ndarray, rho: np.ndarray, q: int, degree: int, x0: float
) -> float:
    """Locally weighted polynomial fit over the q nearest neighbors of x0.

    When q exceeds the number of points, all points are used and the
    bandwidth is stretched by q/n. Windows that cannot support the requested
    degree (all weight on one abscissa) fall back to the weighted mean.
    """
    n = len(xs)
    if q >= n:
        lo, hi = 0, n
        d = np.abs(xs - x0)
        d_max = float(d.max()) * (q / n if q > n else 1.0)
    else:
        lo, hi = _nearest_window(xs, q, x0)
        d = np.abs(xs[lo:hi] - x0)
        d_max = float(d.max())
    if d_max <= 0.0:
        d_max = 1.0  # every neighbor coincides with x0: uniform weights
    w = _tricube(d / d_max) * rho[lo:hi]
    sw = float(w.sum())
    yw = ys[lo:hi]
    if sw <= 0.0:
        return float(yw.mean())
    if degree == 0:
        return float(np.dot(w, yw) / sw)
    xc = xs[lo:hi] - x0
    swx = float(np.dot(w, xc))
    swx2 = float(np.dot(w, xc * xc))
    swy = float(np.dot(w, yw))
    swxy = float(np.dot(w, xc * yw))
    denom = sw * swx2 - swx * swx
    if denom <= 1e-12 * max(sw * swx2, 1.0):
        return swy / sw  # degenerate design: weighted-mean fallback
    beta = (sw * swxy - swx * swy) / denom
    return (swy - beta * swx) / sw  # the intercept is the fit at centered x0


def _loess_series(
    y: np.ndarray,
    span: int,
    degree: int = 1,
    rho: np.ndarray | None = None,
    extend: int = 0,
) -> np.ndarray:
    """Smooth an evenly spaced series, evaluating at integer positions
    -extend .. len(y)-1+extend. Interior positions share one symmetric
    tricube window and are computed vectorized."""
    y = np.asarray(y, dtype=float)
    m = len(y)
    xs = np.arange(m, dtype=float)
    if rho is None:
        rho = np.ones(m)
    out = np.empty(m + 2 * extend)
    h = span // 2
    interior_lo = h  # first center with a full symmetric window
    interior_hi = m - 1 - h
    if span <= m and interior_hi >= interior_lo:
        xc = np.arange(-h, h + 1, dtype=float)
        wbase = _tricube(np.abs(xc) / h) if h > 0 else np.ones(1)
        yw = sliding_window_view(y, span)
        rw = sliding_window_view(rho, span)
        W = wbase * rw
        sw = W.sum(axis=1)
        wy = W * yw
        swy = wy.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            if degree == 0:
                fitted = swy / sw
            else:
                swx = W @ xc
                swx2 = W @ (xc * xc)
                swxy = wy @ xc
                denom = sw * swx2 - swx * swx
                ok = denom > 1e-12 * np.maximum(sw * swx2, 1.0)
                beta = np.where(ok, (sw * swxy - swx * swy) / np.where(ok, denom, 1.0), 0.0)
                fitted = (swy - beta * swx) / sw
            fitted = np.where(sw > 0, fitted, yw.mean(axis=1))
        out[extend + interior_lo : extend + interior_hi + 1] = fitted
        scalar_positions = [p for p in range(-extend, m + extend) if p < interior_lo or p > interior_hi]
    else:
        scalar_positions = list(range(-extend, m + extend))
    for pos in scalar_positions:
        out[extend + pos] = _fit_at(xs, y, rho, span, degree, float(pos))
    return out


def _as_xy(points: Iterable) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for p in points:
        if isinstance(p, dict):
            xs.append(float(p["x"]))
            ys.append(float(p["y"]))
        else:
            x, y = p
            xs.append(float(x))
            ys.append(float(y))
    return np.asarray(xs), np.asarray(ys)


def loess_smooth(
    points: Iterable,
    span: int,
    degree: int = 1,
    weights: Sequence[float] | None = None,
) -> list[float]:
    """Locally weighted regression through points, evaluated at each input x.

    Tricube distance weights over the ``span`` nearest neighbors, optionally
    multiplied by robustness weights. Points may be (x, y) pairs or
    {"x": ..., "y": ...} mappings; results come back in input order.
    """
    xs, ys = _as_xy(points)
    n = len(xs)
    if n == 0:
        raise DecompositionError("loess_smooth requires at least one point")
    if degree not in (0, 1):
        raise DecompositionError(f"degree must be 0 or 1, got {degree}")
    if span < 1 or span % 2 == 0:
        raise DecompositionError(f"span must be a positive odd integer, got {span}")
    if span > n:
        raise DecompositionError(f"span {span} exceeds the number of points {n}")
    if span < degree + 1:
        raise DecompositionError(
            f"a window of {span} points cannot fit a degree-{degree} polynomial"
        )
    if weights is None:
        rho = np.ones(n)
    else:
        rho = np.asarray(list(weights), dtype=float)
        if len(rho) != n:
            raise DecompositionError("weights length must match points")
        if np.any(rho < 0):
            raise DecompositionError("robustness weights must be non-negative")
    order = np.argsort(xs, kind="stable")
    xs_s, ys_s, rho_s = xs[order], ys[order], rho[order]
    return [float(_fit_at(xs_s, ys_s, rho_s, span, degree, float(x0))) for x0 in xs]


# --- Seasonal-trend decomposition ------------------------------------------


def _moving_average(arr: np.ndarray, q: int) -> np.ndarray:
    csum = np.concatenate([[0.0], np.cumsum(arr)])
    return (csum[q:] - csum[:-q]) / q


def _robustness_weights(residual: np.ndarray) -> np.ndarray:
    scale = 6.0 * float(np.median(np.abs(residual)))
    if scale <= 0.0:
        return np.ones(len(residual))
    u = np.clip(np.abs(residual) / scale, 0.0, 1.0)
    return (1.0 - u * u) ** 2


def stl_decompose(
    series: TimeSeries, period: int = 24, params: StlParams | None = None
) -> Decomposition:
    """Iterated LOESS decomposition into trend, seasonal, and remainder.

    Inner loop: detrend; smooth each cycle-subseries (span ``n_s``, extended
    one period at both ends); low-pass the result (moving averages of length
    period, period, 3, then LOESS span ``n_l``); seasonal = smoothed cycles
    minus low-pass; trend = LOESS (span ``n_t``) of the deseasonalized
    series. Outer ``n_o`` rounds recompute bisquare robustness weights from
    the remainder. The seasonal component is centered to mean exactly zero,
    with the offset absorbed into the trend.
    """
    p = params or StlParams()
    y = np.asarray(series.values, dtype=float)
    n = len(y)
    if n < 2 * period:
        raise InsufficientDataError(
            f"series of {n} points is shorter than two periods ({2 * period})"
        )
    if series.fill_fraction > p.fill_fraction_max:
        raise DecompositionError(
            f"{series.fill_fraction:.1%} of points are gap-interpolated, above "
            f"the {p.fill_fraction_max:.0%} limit"
        )
    n_l = p.resolved_n_l(period)
    n_t = p.resolved_n_t(period)

    rho = np.ones(n)
    trend = np.zeros(n)
    seasonal = np.zeros(n)
    for outer in range(p.n_o + 1):
        for _ in range(p.n_i):
            detrended = y - trend
            cycles = np.empty(n + 2 * period)
            for k in range(period):
                idx = np.arange(k, n, period)
                smoothed = _loess_series(
                    detrended[idx], span=p.n_s, degree=1, rho=rho[idx], extend=1
                )
                cycles[k::period] = smoothed
            low_pass = _loess_series(
                _moving_average(
                    _moving_average(_moving_average(cycles, period), period), 3
                ),
                span=n_l,
                degree=1,
            )
            seasonal = cycles[period : period + n] - low_pass
            trend = _loess_series(y - seasonal, span=n_t, degree=1, rho=rho)
        if outer < p.n_o:
            rho = _robustness_weights(y - trend - seasonal)

    # Center the seasonal component so its mean is exactly zero. Subtracting
    # the float mean leaves a residual below one ulp of the values, so instead
    # the centered component is snapped to a power-of-two grid fine enough to
    # be lossless in double precision; on-grid values accumulate without
    # rounding error, which lets the leftover sum be cancelled exactly. Every
    # adjustment lands in the trend and the remainder is computed afterwards,
    # so reconstruction is unaffected.
    offset = seasonal.mean()
    seasonal = seasonal - offset
    trend = trend + offset
    scale = float(np.max(np.abs(seasonal)))
    if scale > 0.0:
        grid = 2.0 ** (math.floor(math.log2(scale)) - 40)
        snapped = np.round(seasonal / grid) * grid
        trend = trend + (seasonal - snapped)
        seasonal = snapped
        residual = float(seasonal.sum())  # exact: every term is on the grid
        seasonal[0] -= residual
        trend[0] += residual
    remainder = y - trend - seasonal
    return Decomposition(
        trend=tuple(trend), seasonal=tuple(seasonal), remainder=tuple(remainder), period=period
    )


# --- Change points ----------------------------------------------------------


def _dust_floor(reference: np.ndarray) -> float:
    """Smallest meaningful penalty for a series at ``reference``'s scale.

    Double-precision LOESS output carries ~1e-15 relative wiggle, whose
    squared-error energy a near-zero penalty would happily "explain" with
    breaks. Flooring at 1e-18 of the reference energy (a million times the
    dust energy, a trillionth of any physical effect) resolves that to "no
    structure" without ever suppressing a real level shift.
    """
    energy = float(np.mean(reference * reference))
    return 1e-18 * len(reference) * max(energy, 1.0)


def default_penalty(trend: Sequence[float]) -> float:
    """10 * var(diff(trend)) * ln(n), floored for effectively noise-free input."""
    x = np.asarray(trend, dtype=float)
    penalty = 10.0 * float(np.var(np.diff(x))) * math.log(len(x))
    return max(penalty, _dust_floor(x))


def penalty_from_remainder(
    remainder: Sequence[float], reference: Sequence[float] | None = None
) -> float:
    """Change-point penalty calibrated to the decomposition's noise floor.

    A smoothed trend has nearly noise-free increments, so penalties derived
    from the trend itself under-penalize and split the smoothing ramps
    around genuine level shifts. Instead the penalty equals the robust noise
    energy of the whole series, n * (1.4826 * MAD(remainder))^2: a break is
    accepted only when it explains more squared error than all the
    remainder noise combined. The median-based scale keeps isolated outlier
    hours from inflating it. On effectively noise-free data the penalty is
    floored at the float-dust energy of ``reference`` (typically the trend;
    the remainder itself when absent).
    """
    r = np.asarray(remainder, dtype=float)
    if r.size == 0:
        raise DecompositionError("penalty_from_remainder requires a non-empty remainder")
    mad = float(np.median(np.abs(r - np.median(r))))
    penalty = r.size * (1.4826 * mad) ** 2
    ref = r if reference is None else np.asarray(reference, dtype=float)
    return max(penalty, _dust_floor(ref))


def detect_change_points(
    trend: Sequence[float], penalty: float | None = None
) -> list[int]:
    """Exact penalized segmentation of the trend into constant levels.

    Minimizes total within-segment squared error plus ``penalty`` per break
    (PELT with L2 cost and candidate pruning). Returns the sorted first
    indices of each new segment; [] means one homogeneous segment.
    """
    x = np.asarray(trend, dtype=float)
    n = len(x)
    if n < 4:
        raise InsufficientDataError(f"need at least 4 trend points, got {n}")
    if penalty is None:
        penalty = default_penalty(x)
    elif penalty <= 0:
        raise DecompositionError(f"penalty must be positive, got {penalty}")

    # Segment SSE is translation-invariant; centering first keeps the
    # prefix-sum cost sums at the scale of the variation instead of the
    # level, so near-constant series don't lose the tiny true cost to
    # cancellation error.
    x = x - float(np.mean(x))
    s1 = np.concatenate([[0.0], np.cumsum(x)])
    s2 = np.concatenate([[0.0], np.cumsum(x * x)])

    def segment_cost(a: int, b: int) -> float:
        total = s1[b] - s1[a]
        return (s2[b] - s2[a]) - total * total / (b - a)

    best_cost = [0.0] * (n + 1)
    best_cost[0] = -penalty
    prev_break = [0] * (n + 1)
    candidates = [0]
    for t in range(1, n + 1):
        best = math.inf
        arg = candidates[0]
        for tau in candidates:
            cost = best_cost[tau] + segment_cost(tau, t) + penalty
            if cost < best:
                best = cost
                arg = tau
        best_cost[t] = best
        prev_break[t] = arg
        candidates = [
            tau for tau in candidates if best_cost[tau] + segment_cost(tau, t) <= best
        ]
        candidates.append(t)

    breaks = []
    t = n
    while t > 0:
        tau = prev_break[t]
        if tau > 0:
            breaks.append(tau)
        t = tau
    breaks.reverse()
    return breaks


# --- Outliers and trend summary ---------------------------------------------


def detect_outliers(
    hourly: TimeSeries | Sequence[float],
    k: float = 4.0,
    flag_all_when_degenerate: bool = False,
) -> list[int]:
    """Indices deviating more than k interquartile ranges from the mean.

    Quartiles use linear interpolation. A zero IQR on a non-constant series
    makes the rule degenerate: a warning is issued and nothing is flagged
    unless ``flag_all_when_degenerate`` asks for every non-zero deviation.
    """
    values = hourly.values if isinstance(hourly, TimeSeries) else hourly
    arr = np.asarray(values, dtype=float)
    if arr.size < 8:
        raise InsufficientDataError(
            f"need at least 8 points for quartiles, got {arr.size}"
        )
    mean = float(arr.mean())
    q1, q3 = np.quantile(arr, [0.25, 0.75])
    iqr = float(q3 - q1)
    deviation = np.abs(arr - mean)
    if iqr == 0.0:
        if np.all(arr == arr[0]):
            return []
        warnings.warn(
            "interquartile range is zero on a non-constant series; the "
            "k*IQR rule is degenerate",
            RuntimeWarning,
            stacklevel=2,
        )
        if not flag_all_when_degenerate:
            return []
        return [int(i) for i in np.nonzero(deviation > 0)[0]]
    return [int(i) for i in np.nonzero(deviation > k * iqr)[0]]


def trend_summary(trend: Sequence[float]) -> dict[str, float]:
    """Trend range and relative change: (max - min) / min."""
    arr = np.asarray(trend, dtype=float)
    if arr.size == 0:
        raise DecompositionError("trend_summary requires a non-empty trend")
    lo = float(arr.min())
    hi = float(arr.max())
    if lo <= 0:
        raise DecompositionError(
            f"trend minimum {lo} must be positive for a relative change"
        )
    return {"min": lo, "max": hi, "rel_change": (hi - lo) / lo}
