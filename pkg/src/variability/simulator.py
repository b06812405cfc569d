"""Deterministic, seedable model of a FaaS platform.

Reproduces the phenomena the analysis pipeline is built to detect: diurnal
service-time variation, weekly eviction patterns behind unexpected cold
starts, mid-tier container mixing, step changes in the long-term trend, and
isolated outlier hours. Same seed + same scenario + same call sequence gives
a bit-identical outcome stream.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from .records import format_timestamp, parse_timestamp
from .targets import InvocationOutcome, quantize_billed

HOURS_PER_WEEK = 168


class ScenarioError(Exception):
    """Invalid scenario configuration."""


@dataclass(frozen=True)
class WeeklyProfile:
    """168 values indexed by hour of week (Monday 00:00 = index 0)."""

    values: tuple[float, ...]
    interpolation: str = "step"

    def __post_init__(self):
        if len(self.values) != HOURS_PER_WEEK:
            raise ScenarioError(f"weekly profile needs {HOURS_PER_WEEK} values, got {len(self.values)}")
        if not all(math.isfinite(v) for v in self.values):
            raise ScenarioError("weekly profile values must be finite")
        if self.interpolation not in ("step", "linear"):
            raise ScenarioError(f"unknown interpolation {self.interpolation!r}")

    @staticmethod
    def constant(value: float, interpolation: str = "step") -> "WeeklyProfile":
        return WeeklyProfile(values=(value,) * HOURS_PER_WEEK, interpolation=interpolation)

    @staticmethod
    def from_daily(by_weekday: list[list[float]], interpolation: str = "step") -> "WeeklyProfile":
        """Build from 7 lists of 24 hourly values, Monday first."""
        if len(by_weekday) != 7 or any(len(day) != 24 for day in by_weekday):
            raise ScenarioError("from_daily expects 7 lists of 24 values")
        return WeeklyProfile(
            values=tuple(v for day in by_weekday for v in day), interpolation=interpolation
        )

    def value_at(self, position: float) -> float:
        """Value at a fractional hour-of-week position, wrapping the week."""
        position = position % HOURS_PER_WEEK
        lower = int(position)
        if self.interpolation == "step":
            return self.values[lower]
        frac = position - lower
        upper = (lower + 1) % HOURS_PER_WEEK
        return self.values[lower] * (1.0 - frac) + self.values[upper] * frac


def hour_of_week(when: datetime, tz: ZoneInfo) -> float:
    """Fractional hour-of-week of an instant in the given zone (Mon 00:00 = 0)."""
    local = when.astimezone(tz)
    return (
        local.weekday() * 24
        + local.hour
        + local.minute / 60
        + (local.second + local.microsecond / 1e6) / 3600
    )


def profile_value(profile: WeeklyProfile, when: datetime, tz: ZoneInfo) -> float:
    """Evaluate a weekly profile at an instant, bucketing in local time."""
    return profile.value_at(hour_of_week(when, tz))


@dataclass(frozen=True)
class TrendStep:
    time: datetime
    factor: float


@dataclass(frozen=True)
class OutlierEvent:
    time: datetime
    duration_h: float
    factor: float


@dataclass(frozen=True)
class TierMixing:
    backing_tiers: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.backing_tiers) != len(self.weights) or not self.backing_tiers:
            raise ScenarioError("mixing needs matching non-empty backing_tiers and weights")
        if any(w < 0 for w in self.weights):
            raise ScenarioError("mixing weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ScenarioError(f"mixing weights must sum to 1, got {sum(self.weights)}")


@dataclass(frozen=True)
class SimScenario:
    """Full parameterization of the simulated platform."""

    seed: int
    tiers: dict[int, float]
    diurnal_profile: WeeklyProfile
    eviction_profile: WeeklyProfile
    keep_alive_s: float = 900.0
    cold_multiplier_mean: float = 9.5
    cold_multiplier_sd: float = 1.0
    mid_tier_mixing: dict[int, TierMixing] = field(default_factory=dict)
    trend_steps: tuple[TrendStep, ...] = ()
    outlier_events: tuple[OutlierEvent, ...] = ()
    noise_cv: float = 0.05

    def __post_init__(self):
        if not self.tiers:
            raise ScenarioError("scenario needs at least one memory tier")
        for mem, base in self.tiers.items():
            if mem <= 0 or mem % 128 != 0:
                raise ScenarioError(f"tier memory {mem} must be a positive multiple of 128")
            if base <= 0:
                raise ScenarioError(f"tier {mem} base_warm_ms must be positive, got {base}")
        for v in self.eviction_profile.values:
            if not 0.0 <= v <= 1.0:
                raise ScenarioError(f"eviction probability {v} outside [0, 1]")
        if self.keep_alive_s <= 0:
            raise ScenarioError("keep_alive_s must be positive")
        if self.noise_cv < 0:
            raise ScenarioError("noise_cv must be non-negative")
        for mem, mix in self.mid_tier_mixing.items():
            for backing in mix.backing_tiers:
                if backing not in self.tiers:
                    raise ScenarioError(f"mixing for {mem} references unknown tier {backing}")
        for step in self.trend_steps:
            if step.factor <= 0:
                raise ScenarioError("trend step factors must be positive")
        for event in self.outlier_events:
            if event.factor <= 0 or event.duration_h <= 0:
                raise ScenarioError("outlier events need positive factor and duration")

    def known_memory(self, memory_mb: int) -> bool:
        return memory_mb in self.tiers or memory_mb in self.mid_tier_mixing


def assign_backing_tier(scenario: SimScenario, memory_mb: int, rng: np.random.Generator) -> int:
    """Pick the container tier that will actually serve a new instance.

    Mid tiers with a mixing entry draw a backing tier per the configured
    weights (fixed for the instance's lifetime); plain tiers back themselves.
    """
    mix = scenario.mid_tier_mixing.get(memory_mb)
    if mix is None:
        if memory_mb not in scenario.tiers:
            raise ScenarioError(f"memory tier {memory_mb} not configured")
        return memory_mb
    u = rng.random()
    acc = 0.0
    for tier, weight in zip(mix.backing_tiers, mix.weights):
        acc += weight
        if u < acc:
            return tier
    return mix.backing_tiers[-1]


class _FunctionState:
    __slots__ = ("memory_mb", "rng", "instance_id", "base_warm_ms", "last_end_epoch", "instances")

    def __init__(self, memory_mb: int, rng: np.random.Generator):
        self.memory_mb = memory_mb
        self.rng = rng
        self.instance_id: str | None = None
        self.base_warm_ms = 0.0
        self.last_end_epoch = -math.inf
        self.instances = 0


class SimulatorState:
    """Mutable per-campaign simulator: scenario plus per-function-key state.

    State is partitioned per function key; the deterministic guarantee
    requires a single-threaded driver (the virtual-clock campaign executor).
    """

    def __init__(
        self,
        scenario: SimScenario,
        tz: ZoneInfo,
        billing_quantum_ms: float = 1.0,
    ):
        self.scenario = scenario
        self.tz = tz
        self.billing_quantum_ms = billing_quantum_ms
        self._functions: dict[str, _FunctionState] = {}
        self._how_cache: dict[int, int] = {}
        # Threaded campaigns may drive distinct keys concurrently; state
        # access is serialized so the shared caches and per-key RNG streams
        # stay coherent either way.
        self._lock = threading.Lock()
        step_order = sorted(scenario.trend_steps, key=lambda s: s.time)
        self._step_epochs = [s.time.timestamp() for s in step_order]
        factors = [1.0]
        for step in step_order:
            factors.append(factors[-1] * step.factor)
        self._step_cumfactors = factors
        self._outlier_windows = [
            (e.time.timestamp(), e.time.timestamp() + e.duration_h * 3600.0, e.factor)
            for e in scenario.outlier_events
        ]

    def register(self, function_key: str, memory_mb: int) -> None:
        if not self.scenario.known_memory(memory_mb):
            raise ScenarioError(f"memory tier {memory_mb} not in scenario tiers or mixing")
        if function_key not in self._functions:
            key_int = int.from_bytes(hashlib.sha256(function_key.encode()).digest()[:8], "big")
            rng = np.random.default_rng((self.scenario.seed, key_int))
            self._functions[function_key] = _FunctionState(memory_mb, rng)

    def require_known(self, function_key: str) -> None:
        if function_key not in self._functions:
            raise ScenarioError(f"function key {function_key!r} not registered with the simulator")

    def _hour_of_week(self, epoch: float) -> float:
        epoch_hour = int(epoch // 3600)
        how = self._how_cache.get(epoch_hour)
        if how is None:
            local = datetime.fromtimestamp(epoch_hour * 3600.0, tz=self.tz)
            how = local.weekday() * 24 + local.hour
            self._how_cache[epoch_hour] = how
        return how + (epoch - epoch_hour * 3600.0) / 3600.0

    def _trend_factor(self, epoch: float) -> float:
        return self._step_cumfactors[bisect_right(self._step_epochs, epoch)]

    def _outlier_factor(self, epoch: float) -> float:
        factor = 1.0
        for start, end, f in self._outlier_windows:
            if start <= epoch < end:
                factor *= f
        return factor

    def invoke(self, function_key: str, call_index: int, at_epoch: float) -> InvocationOutcome:
        """Serve one call at the given epoch time and return its outcome."""
        with self._lock:
            return self._invoke_locked(function_key, call_index, at_epoch)

    def _invoke_locked(
        self, function_key: str, call_index: int, at_epoch: float
    ) -> InvocationOutcome:
        self.require_known(function_key)
        fn = self._functions[function_key]
        rng = fn.rng
        scenario = self.scenario
        position = self._hour_of_week(at_epoch)

        alive = (
            fn.instance_id is not None
            and (at_epoch - fn.last_end_epoch) < scenario.keep_alive_s
        )
        if alive and call_index == 2:
            # Platform-side recycling: one Bernoulli draw per second call.
            p_evict = scenario.eviction_profile.value_at(position)
            if p_evict > 0.0 and rng.random() < p_evict:
                alive = False

        cold = not alive
        if cold:
            backing = assign_backing_tier(scenario, fn.memory_mb, rng)
            fn.instances += 1
            fn.instance_id = f"{function_key}-i{fn.instances:06d}"
            fn.base_warm_ms = scenario.tiers[backing]
            multiplier = rng.normal(scenario.cold_multiplier_mean, scenario.cold_multiplier_sd)
            while multiplier < 1.0:
                multiplier = rng.normal(scenario.cold_multiplier_mean, scenario.cold_multiplier_sd)
        else:
            multiplier = 1.0

        noise = rng.normal(0.0, scenario.noise_cv) if scenario.noise_cv > 0 else 0.0
        while noise <= -1.0:
            noise = rng.normal(0.0, scenario.noise_cv)

        duration_ms = (
            fn.base_warm_ms
            * scenario.diurnal_profile.value_at(position)
            * self._trend_factor(at_epoch)
            * self._outlier_factor(at_epoch)
            * (1.0 + noise)
        )
        # Cold starts inherit the diurnal/trend pattern through the warm base.
        duration_ms *= multiplier
        fn.last_end_epoch = at_epoch + duration_ms / 1000.0
        return InvocationOutcome(
            instance_id=fn.instance_id,
            cold=cold,
            handler_duration_ms=duration_ms,
            billed_duration_ms=quantize_billed(duration_ms, self.billing_quantum_ms),
        )


# -- scenario (de)serialization ---------------------------------------------


def scenario_to_dict(scenario: SimScenario) -> dict:
    return {
        "seed": scenario.seed,
        "tiers": {str(mem): base for mem, base in sorted(scenario.tiers.items())},
        "diurnal_profile": {
            "values": list(scenario.diurnal_profile.values),
            "interpolation": scenario.diurnal_profile.interpolation,
        },
        "eviction_profile": {
            "values": list(scenario.eviction_profile.values),
            "interpolation": scenario.eviction_profile.interpolation,
        },
        "keep_alive_s": scenario.keep_alive_s,
        "cold_multiplier_mean": scenario.cold_multiplier_mean,
        "cold_multiplier_sd": scenario.cold_multiplier_sd,
        "mid_tier_mixing": {
            str(mem): {"backing_tiers": list(mix.backing_tiers), "weights": list(mix.weights)}
            for mem, mix in sorted(scenario.mid_tier_mixing.items())
        },
        "trend_steps": [
            {"time": format_timestamp(s.time), "factor": s.factor} for s in scenario.trend_steps
        ],
        "outlier_events": [
            {"time": format_timestamp(e.time), "duration_h": e.duration_h, "factor": e.factor}
            for e in scenario.outlier_events
        ],
        "noise_cv": scenario.noise_cv,
    }


def _profile_from_dict(data: dict, name: str) -> WeeklyProfile:
    try:
        return WeeklyProfile(
            values=tuple(float(v) for v in data["values"]),
            interpolation=data.get("interpolation", "step"),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"bad {name} profile: {exc}") from exc


def scenario_from_dict(data: dict) -> SimScenario:
    try:
        return SimScenario(
            seed=int(data["seed"]),
            tiers={int(mem): float(base) for mem, base in data["tiers"].items()},
            diurnal_profile=_profile_from_dict(data["diurnal_profile"], "diurnal"),
            eviction_profile=_profile_from_dict(data["eviction_profile"], "eviction"),
            keep_alive_s=float(data.get("keep_alive_s", 900.0)),
            cold_multiplier_mean=float(data.get("cold_multiplier_mean", 9.5)),
            cold_multiplier_sd=float(data.get("cold_multiplier_sd", 1.0)),
            mid_tier_mixing={
                int(mem): TierMixing(
                    backing_tiers=tuple(int(t) for t in mix["backing_tiers"]),
                    weights=tuple(float(w) for w in mix["weights"]),
                )
                for mem, mix in data.get("mid_tier_mixing", {}).items()
            },
            trend_steps=tuple(
                TrendStep(time=parse_timestamp(s["time"]), factor=float(s["factor"]))
                for s in data.get("trend_steps", [])
            ),
            outlier_events=tuple(
                OutlierEvent(
                    time=parse_timestamp(e["time"]),
                    duration_h=float(e["duration_h"]),
                    factor=float(e["factor"]),
                )
                for e in data.get("outlier_events", [])
            ),
            noise_cv=float(data.get("noise_cv", 0.05)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"invalid scenario: {exc}") from exc


def load_scenario(path: str | Path) -> SimScenario:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON: {exc}") from exc
    return scenario_from_dict(data)


def save_scenario(scenario: SimScenario, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)
        fh.write("\n")


# -- default scenario --------------------------------------------------------

# Hour-of-day service-time factors: flat nights, a working-hours plateau 15%
# above the night level, and a tapering evening with a small late bump.
_DAY_RATIO = 122.0 / 106.0
_DIURNAL_BY_HOUR = (
    [1.0] * 6                      # 00-05
    + [1.02]                       # 06 ramp-up
    + [_DAY_RATIO] * 9             # 07-15 working plateau
    + [1.10, 1.07, 1.05, 1.08]     # 16-19 taper
    + [1.13, 1.08, 1.03]           # 20-22 evening bump and fall
    + [1.0]                        # 23 night again
)

# Per-pair eviction probabilities. Weekday nights 3.74%, weekend flat 3.6%,
# and working-hours peaks declining from Monday (12.3%) to Friday (7.5%);
# the window averages land on 3.7% nights / 3.6% weekend / 9.8% working.
_WEEKDAY_PEAKS = (0.123, 0.109, 0.097, 0.086, 0.075)
_NIGHT_EVICTION = 0.0374
_WEEKEND_EVICTION = 0.036


def _eviction_day(peak: float) -> list[float]:
    day = [_NIGHT_EVICTION] * 24
    day[8] = (_NIGHT_EVICTION + peak) / 2.0
    for hour in range(9, 17):
        day[hour] = peak
    day[17] = peak * 0.55
    day[18] = peak * 0.35
    day[19] = 0.045
    return day


def default_diurnal_profile() -> WeeklyProfile:
    return WeeklyProfile.from_daily([list(_DIURNAL_BY_HOUR) for _ in range(7)])


def default_eviction_profile() -> WeeklyProfile:
    days = [_eviction_day(peak) for peak in _WEEKDAY_PEAKS]
    days += [[_WEEKEND_EVICTION] * 24, [_WEEKEND_EVICTION] * 24]
    return WeeklyProfile.from_daily(days)


def default_trend_steps(tz: ZoneInfo) -> tuple[TrendStep, ...]:
    return (
        TrendStep(datetime(2023, 1, 9, 7, 0, tzinfo=tz), 1.06),
        TrendStep(datetime(2023, 1, 23, 6, 0, tzinfo=tz), 1.05),
        TrendStep(datetime(2023, 2, 7, 1, 0, tzinfo=tz), 0.88),
        TrendStep(datetime(2023, 2, 17, 6, 0, tzinfo=tz), 1.09),
    )


def default_outlier_events(tz: ZoneInfo) -> tuple[OutlierEvent, ...]:
    return (
        OutlierEvent(datetime(2023, 1, 1, 0, 0, tzinfo=tz), 1.0, 1.75),
        OutlierEvent(datetime(2023, 1, 3, 6, 0, tzinfo=tz), 1.0, 1.75),
        OutlierEvent(datetime(2023, 1, 27, 3, 0, tzinfo=tz), 1.0, 1.80),
        OutlierEvent(datetime(2023, 1, 29, 0, 0, tzinfo=tz), 1.0, 1.80),
        OutlierEvent(datetime(2023, 2, 1, 9, 0, tzinfo=tz), 1.0, 1.60),
    )


def default_scenario(
    seed: int = 20221212,
    with_trend_steps: bool = True,
    with_outliers: bool = True,
) -> SimScenario:
    """The shipped GCF-like scenario: 106/122 ms diurnal shape on the 128MB
    tier, weekly eviction pattern, 256MB backed half by 128MB and half by
    512MB containers, four trend steps, and five outlier hours."""
    tz = ZoneInfo("CET")
    return SimScenario(
        seed=seed,
        tiers={128: 106.0, 512: 26.5},
        diurnal_profile=default_diurnal_profile(),
        eviction_profile=default_eviction_profile(),
        keep_alive_s=900.0,
        cold_multiplier_mean=9.5,
        cold_multiplier_sd=1.0,
        mid_tier_mixing={256: TierMixing(backing_tiers=(128, 512), weights=(0.5, 0.5))},
        trend_steps=default_trend_steps(tz) if with_trend_steps else (),
        outlier_events=default_outlier_events(tz) if with_outliers else (),
        noise_cv=0.05,
    )
