"""Deterministic platform simulator: lifecycle, profiles, trend, serialization."""

from __future__ import annotations

import json
from datetime import datetime, timezone
from zoneinfo import ZoneInfo

import numpy as np
import pytest

from variability.simulator import (
    OutlierEvent,
    ScenarioError,
    SimScenario,
    SimulatorState,
    TierMixing,
    TrendStep,
    WeeklyProfile,
    assign_backing_tier,
    default_scenario,
    load_scenario,
    profile_value,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)

CET = ZoneInfo("CET")
MONDAY = datetime(2022, 12, 12, 0, 0, tzinfo=CET)  # a Monday in CET


def _epoch(dt: datetime) -> float:
    return dt.timestamp()


def _flat_scenario(**overrides) -> SimScenario:
    defaults = dict(
        seed=11,
        tiers={128: 100.0},
        diurnal_profile=WeeklyProfile.constant(1.0),
        eviction_profile=WeeklyProfile.constant(0.0),
        keep_alive_s=1e9,
        noise_cv=0.0,
    )
    defaults.update(overrides)
    return SimScenario(**defaults)


def _state(scenario: SimScenario) -> SimulatorState:
    state = SimulatorState(scenario, CET)
    return state


# --- weekly profiles ----------------------------------------------------------


def test_profile_requires_168_values():
    with pytest.raises(ScenarioError):
        WeeklyProfile(values=(1.0,) * 24)


def test_profile_value_at_wraps_and_steps():
    values = [1.0] * 168
    values[10] = 2.0  # Monday 10:00
    profile = WeeklyProfile(values=tuple(values))
    assert profile.value_at(10.0) == 2.0
    assert profile.value_at(10.99) == 2.0
    assert profile.value_at(11.0) == 1.0
    assert profile.value_at(10.5 + 168.0) == 2.0  # wraps the week


def test_profile_linear_interpolation():
    values = [0.0] * 168
    values[1] = 10.0
    profile = WeeklyProfile(values=tuple(values), interpolation="linear")
    assert profile.value_at(0.5) == 5.0
    assert profile.value_at(1.0) == 10.0


def test_profile_value_buckets_in_local_time():
    values = [1.0] * 168
    values[10] = 3.0  # Monday 10:00 *local*
    profile = WeeklyProfile(values=tuple(values))
    # 09:30 UTC on a Monday is 10:30 CET
    when = datetime(2022, 12, 12, 9, 30, tzinfo=timezone.utc)
    assert profile_value(profile, when, CET) == 3.0
    assert profile_value(profile, when, ZoneInfo("UTC")) == 1.0


# --- lifecycle: cold starts, keep-alive, eviction -----------------------------


def test_warm_call_is_exactly_base_duration():
    state = _state(_flat_scenario())
    state.register("fn", 128)
    first = state.invoke("fn", 1, _epoch(MONDAY))
    assert first.cold is True
    assert first.handler_duration_ms >= 100.0  # cold multiplier >= 1
    second = state.invoke("fn", 2, _epoch(MONDAY) + 2.0)
    assert second.cold is False
    assert second.handler_duration_ms == 100.0
    assert second.billed_duration_ms == 100.0
    assert second.instance_id == first.instance_id


def test_cold_multiplier_distribution():
    state = _state(_flat_scenario())
    ratios = []
    for i in range(200):
        key = f"fn-{i}"
        state.register(key, 128)
        outcome = state.invoke(key, 1, _epoch(MONDAY))
        ratios.append(outcome.handler_duration_ms / 100.0)
    assert min(ratios) >= 1.0
    assert 9.0 < float(np.mean(ratios)) < 10.0


def test_keep_alive_expiry():
    state = _state(_flat_scenario(keep_alive_s=10.0))
    state.register("fn", 128)
    first = state.invoke("fn", 1, 0.0)
    end1 = 0.0 + first.handler_duration_ms / 1000.0
    just_inside = state.invoke("fn", 2, end1 + 9.999)
    assert just_inside.cold is False
    end2 = (end1 + 9.999) + just_inside.handler_duration_ms / 1000.0
    expired = state.invoke("fn", 1, end2 + 10.001)  # idle past the keep-alive
    assert expired.cold is True
    assert expired.instance_id != first.instance_id


def test_eviction_only_applies_to_second_calls():
    state = _state(_flat_scenario(eviction_profile=WeeklyProfile.constant(1.0)))
    state.register("fn", 128)
    first = state.invoke("fn", 1, 0.0)
    # A first call shortly after stays warm: no eviction draw for call 1.
    warm_first = state.invoke("fn", 1, 2.0)
    assert warm_first.cold is False
    assert warm_first.instance_id == first.instance_id
    # A second call always finds the instance recycled under p=1.
    evicted = state.invoke("fn", 2, 4.0)
    assert evicted.cold is True
    assert evicted.instance_id != first.instance_id


def test_zero_eviction_keeps_pairs_warm():
    state = _state(_flat_scenario())
    state.register("fn", 128)
    state.invoke("fn", 1, 0.0)
    for i in range(1, 50):
        outcome = state.invoke("fn", 2, 2.0 * i)
        assert outcome.cold is False


# --- duration shaping ---------------------------------------------------------


def test_diurnal_profile_shapes_warm_durations():
    values = [1.0] * 168
    values[10] = 2.0  # Monday 10:00-11:00 local
    scenario = _flat_scenario(diurnal_profile=WeeklyProfile(values=tuple(values)))
    state = _state(scenario)
    state.register("fn", 128)
    state.invoke("fn", 1, _epoch(MONDAY))
    night = state.invoke("fn", 2, _epoch(MONDAY.replace(hour=3)))
    peak = state.invoke("fn", 2, _epoch(MONDAY.replace(hour=10, minute=30)))
    assert night.handler_duration_ms == 100.0
    assert peak.handler_duration_ms == 200.0


def test_trend_steps_compound():
    t1 = MONDAY.replace(day=13)
    t2 = MONDAY.replace(day=14)
    scenario = _flat_scenario(
        trend_steps=(TrendStep(t1, 2.0), TrendStep(t2, 1.5)),
    )
    state = _state(scenario)
    state.register("fn", 128)
    state.invoke("fn", 1, _epoch(MONDAY))
    before = state.invoke("fn", 2, _epoch(t1) - 3600.0)
    after_first = state.invoke("fn", 2, _epoch(t1) + 3600.0)
    after_both = state.invoke("fn", 2, _epoch(t2) + 3600.0)
    assert before.handler_duration_ms == 100.0
    assert after_first.handler_duration_ms == 200.0
    assert after_both.handler_duration_ms == 300.0


def test_outlier_window_is_half_open():
    event_start = MONDAY.replace(day=13, hour=6)
    scenario = _flat_scenario(
        outlier_events=(OutlierEvent(event_start, duration_h=1.0, factor=1.75),)
    )
    state = _state(scenario)
    state.register("fn", 128)
    state.invoke("fn", 1, _epoch(MONDAY))
    e = _epoch(event_start)
    assert state.invoke("fn", 2, e - 1.0).handler_duration_ms == 100.0
    assert state.invoke("fn", 2, e).handler_duration_ms == 175.0
    assert state.invoke("fn", 2, e + 3599.0).handler_duration_ms == 175.0
    assert state.invoke("fn", 2, e + 3600.0).handler_duration_ms == 100.0


def test_noise_redraw_keeps_durations_positive():
    state = _state(_flat_scenario(noise_cv=5.0))
    state.register("fn", 128)
    state.invoke("fn", 1, 0.0)
    for i in range(1, 200):
        outcome = state.invoke("fn", 2, 2.0 * i)
        assert outcome.handler_duration_ms > 0.0


# --- tier mixing --------------------------------------------------------------


def test_assign_backing_tier_mixes_half_and_half():
    scenario = _flat_scenario(
        tiers={128: 100.0, 512: 25.0},
        mid_tier_mixing={256: TierMixing(backing_tiers=(128, 512), weights=(0.5, 0.5))},
    )
    rng = np.random.default_rng(0)
    draws = [assign_backing_tier(scenario, 256, rng) for _ in range(4000)]
    frac_128 = draws.count(128) / len(draws)
    assert 0.45 < frac_128 < 0.55
    assert assign_backing_tier(scenario, 128, rng) == 128
    assert assign_backing_tier(scenario, 512, rng) == 512
    with pytest.raises(ScenarioError):
        assign_backing_tier(scenario, 1024, rng)


def test_mixed_memory_shows_two_warm_populations():
    scenario = _flat_scenario(
        tiers={128: 100.0, 512: 25.0},
        mid_tier_mixing={256: TierMixing(backing_tiers=(128, 512), weights=(0.5, 0.5))},
    )
    state = _state(scenario)
    warm_durations = set()
    for i in range(60):
        key = f"fn-{i}"
        state.register(key, 256)
        state.invoke(key, 1, 0.0)
        warm_durations.add(state.invoke(key, 2, 2.0).handler_duration_ms)
    assert warm_durations == {100.0, 25.0}


# --- registration and determinism ---------------------------------------------


def test_register_is_idempotent_and_preserves_state():
    state = _state(_flat_scenario())
    state.register("fn", 128)
    first = state.invoke("fn", 1, 0.0)
    state.register("fn", 128)  # re-register must not reset instance state
    second = state.invoke("fn", 2, 2.0)
    assert second.cold is False
    assert second.instance_id == first.instance_id


def test_invoke_requires_registration():
    state = _state(_flat_scenario())
    with pytest.raises(ScenarioError):
        state.invoke("ghost", 1, 0.0)


def test_register_rejects_unconfigured_memory():
    state = _state(_flat_scenario())
    with pytest.raises(ScenarioError):
        state.register("fn", 384)


def test_same_seed_same_key_reproduces_streams():
    def run():
        state = _state(_flat_scenario(noise_cv=0.05, eviction_profile=WeeklyProfile.constant(0.1)))
        state.register("fn", 128)
        out = [state.invoke("fn", 1, 0.0).handler_duration_ms]
        out += [state.invoke("fn", 2, 2.0 * i).handler_duration_ms for i in range(1, 40)]
        return out

    assert run() == run()


def test_different_keys_get_independent_streams():
    state = _state(_flat_scenario(noise_cv=0.05))
    state.register("a", 128)
    state.register("b", 128)
    a = state.invoke("a", 1, 0.0).handler_duration_ms
    b = state.invoke("b", 1, 0.0).handler_duration_ms
    assert a != b


# --- scenario validation and serialization ------------------------------------


def test_scenario_validation_rejects_bad_values():
    with pytest.raises(ScenarioError):
        _flat_scenario(tiers={})
    with pytest.raises(ScenarioError):
        _flat_scenario(tiers={100: 50.0})  # not a multiple of 128
    with pytest.raises(ScenarioError):
        _flat_scenario(tiers={128: -1.0})
    with pytest.raises(ScenarioError):
        _flat_scenario(eviction_profile=WeeklyProfile.constant(1.5))
    with pytest.raises(ScenarioError):
        _flat_scenario(keep_alive_s=0.0)
    with pytest.raises(ScenarioError):
        _flat_scenario(noise_cv=-0.1)
    with pytest.raises(ScenarioError):
        _flat_scenario(
            mid_tier_mixing={256: TierMixing(backing_tiers=(128, 512), weights=(0.5, 0.5))}
        )  # 512 not a configured tier here
    with pytest.raises(ScenarioError):
        TierMixing(backing_tiers=(128, 512), weights=(0.7, 0.7))
    with pytest.raises(ScenarioError):
        _flat_scenario(trend_steps=(TrendStep(MONDAY, -1.0),))
    with pytest.raises(ScenarioError):
        _flat_scenario(outlier_events=(OutlierEvent(MONDAY, 0.0, 1.5),))


def test_scenario_round_trips_through_json():
    scenario = default_scenario()
    data = json.loads(json.dumps(scenario_to_dict(scenario)))
    assert scenario_from_dict(data) == scenario


def test_save_and_load_scenario(tmp_path):
    scenario = default_scenario(seed=42)
    path = tmp_path / "scenario.json"
    save_scenario(scenario, path)
    assert load_scenario(path) == scenario
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(bad)


def test_scenario_from_dict_rejects_missing_fields():
    with pytest.raises(ScenarioError):
        scenario_from_dict({"seed": 1})


# --- shipped default scenario -------------------------------------------------


def test_default_scenario_shape():
    scenario = default_scenario()
    assert scenario.tiers == {128: 106.0, 512: 26.5}
    assert scenario.mid_tier_mixing[256].weights == (0.5, 0.5)
    assert len(scenario.trend_steps) == 4
    assert len(scenario.outlier_events) == 5
    assert scenario.keep_alive_s == 900.0

    diurnal = scenario.diurnal_profile
    # Night hours sit at the base; the working plateau is 122/106 above it.
    assert profile_value(diurnal, MONDAY.replace(hour=3), CET) == 1.0
    assert profile_value(diurnal, MONDAY.replace(hour=11), CET) == pytest.approx(122.0 / 106.0)

    eviction = scenario.eviction_profile
    assert profile_value(eviction, MONDAY.replace(hour=12), CET) == 0.123
    assert profile_value(eviction, MONDAY.replace(day=13, hour=12), CET) == 0.109
    assert profile_value(eviction, MONDAY.replace(hour=3), CET) == 0.0374
    assert profile_value(eviction, MONDAY.replace(day=17, hour=12), CET) == 0.036  # Saturday
