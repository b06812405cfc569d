"""Campaign planning and execution: the cold/warm pair-loop protocol and
hourly burst mode, driven against any invocation target on any clock.

A pair loop calls a function once (cold), immediately calls it again (warm),
then idles for the cooldown so the next loop starts cold again. Parallel
per-function copies are staggered by the measurement interval so that, in
aggregate, one pair starts every ``measurement_interval_s``.
"""

from __future__ import annotations

import heapq
import logging
import math
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime
from typing import Sequence
from zoneinfo import ZoneInfo

from .clock import from_epoch, to_epoch
from .records import InvocationRecord, RecordWriter
from .targets import InvocationOutcome, InvocationTarget

log = logging.getLogger(__name__)

MODES = ("pair_loop", "burst")

# Records are flushed to the sink in batches to bound memory on long
# simulated campaigns without paying a file open per call.
_FLUSH_EVERY = 5000


class CampaignError(Exception):
    """Invalid campaign configuration or aborted execution."""


class EmptyPlanError(CampaignError):
    """The configured duration is too short to fit a single loop."""


@dataclass(frozen=True)
class FunctionSpec:
    """One deployed function variant under measurement."""

    function_name: str
    workload: str
    memory_mb: int
    endpoint: str | None = None  # http URL; "{copy}" expands to the copy index
    sim_key: str | None = None  # defaults to function_name

    def key_for_copy(self, copy_index: int) -> str:
        base = self.sim_key or self.function_name
        return f"{base}#c{copy_index}"

    def endpoint_for_copy(self, copy_index: int) -> str:
        if self.endpoint is None:
            raise CampaignError(f"function {self.function_name} has no endpoint configured")
        return self.endpoint.replace("{copy}", str(copy_index))


@dataclass(frozen=True)
class CampaignConfig:
    """Everything needed to plan and execute one measurement campaign."""

    functions: tuple[FunctionSpec, ...]
    duration_s: float
    mode: str = "pair_loop"
    measurement_interval_s: float = 40.0
    cooldown_s: float = 1200.0
    burst_size: int = 50
    burst_period_s: float = 3600.0
    start: datetime | None = None
    timezone: str = "CET"
    billing_quantum_ms: float = 1.0
    pair_gap_s: float = 1.0

    def __post_init__(self):
        if not self.functions:
            raise CampaignError("campaign needs at least one function")
        if self.mode not in MODES:
            raise CampaignError(f"unknown mode {self.mode!r}")
        if self.duration_s <= 0:
            raise CampaignError("duration_s must be positive")
        if self.measurement_interval_s <= 0 or self.cooldown_s <= 0:
            raise CampaignError("interval and cooldown must be positive")
        if self.burst_size < 1 or self.burst_period_s <= 0:
            raise CampaignError("burst_size and burst_period_s must be positive")
        if self.pair_gap_s < 0:
            raise CampaignError("pair_gap_s must be non-negative")
        if self.billing_quantum_ms <= 0:
            raise CampaignError("billing_quantum_ms must be positive")
        if self.mode == "pair_loop" and self.cooldown_s < self.measurement_interval_s:
            raise CampaignError(
                f"pair_loop requires cooldown_s >= measurement_interval_s "
                f"({self.cooldown_s} < {self.measurement_interval_s})"
            )
        try:
            ZoneInfo(self.timezone)  # fail fast on bad zone names
        except Exception as exc:
            raise CampaignError(f"unknown timezone {self.timezone!r}") from exc

    @property
    def copies_needed(self) -> int:
        return max(1, math.ceil(self.cooldown_s / self.measurement_interval_s))

    def spec_by_name(self, function_name: str) -> FunctionSpec:
        for spec in self.functions:
            if spec.function_name == function_name:
                return spec
        raise CampaignError(f"unknown function {function_name!r}")


@dataclass(frozen=True)
class PlannedCall:
    virtual_time: datetime
    function_name: str
    copy_index: int
    loop_id: str
    call_index: int


@dataclass
class CampaignSummary:
    calls_made: int = 0
    errors: int = 0
    wall_time_s: float = 0.0


def _resolve_start(config: CampaignConfig, start: datetime | None) -> float:
    start = start or config.start
    if start is None:
        raise CampaignError("campaign start time is required for planning")
    if start.tzinfo is None:
        raise CampaignError("campaign start must be timezone-aware")
    return to_epoch(start)


def plan_campaign(config: CampaignConfig, start: datetime | None = None) -> list[PlannedCall]:
    """Plan a pair-loop campaign.

    ``ceil(cooldown / interval)`` copies per function, copy k offset by
    k * interval; each copy loops every cooldown. A loop is planned as call 1
    at the loop start and call 2 one nominal pair gap later (execution issues
    call 2 on call 1's completion regardless).
    """
    if config.mode != "pair_loop":
        raise CampaignError(f"plan_campaign requires pair_loop mode, got {config.mode!r}")
    start_epoch = _resolve_start(config, start)
    end_epoch = start_epoch + config.duration_s
    copies = config.copies_needed
    plan: list[PlannedCall] = []
    for spec in config.functions:
        for copy in range(copies):
            offset = start_epoch + copy * config.measurement_interval_s
            loop = 0
            while True:
                t1 = offset + loop * config.cooldown_s
                if t1 >= end_epoch or t1 + config.pair_gap_s > end_epoch:
                    break
                loop_id = f"{spec.function_name}-c{copy:02d}-l{loop:05d}"
                plan.append(
                    PlannedCall(from_epoch(t1), spec.function_name, copy, loop_id, 1)
                )
                plan.append(
                    PlannedCall(
                        from_epoch(t1 + config.pair_gap_s), spec.function_name, copy, loop_id, 2
                    )
                )
                loop += 1
    if not plan:
        raise EmptyPlanError(
            f"duration {config.duration_s}s is too short for a single pair loop"
        )
    plan.sort(key=lambda c: (c.virtual_time, c.function_name, c.copy_index, c.call_index))
    return plan


def plan_burst(config: CampaignConfig, start: datetime | None = None) -> list[PlannedCall]:
    """Plan a burst campaign: every period, ``burst_size`` strictly sequential
    calls on copy 0. The head call of each burst keeps call_index 1 so the
    expected-cold head stays distinguishable downstream."""
    if config.mode != "burst":
        raise CampaignError(f"plan_burst requires burst mode, got {config.mode!r}")
    start_epoch = _resolve_start(config, start)
    end_epoch = start_epoch + config.duration_s
    plan: list[PlannedCall] = []
    for spec in config.functions:
        burst = 0
        while True:
            t_burst = start_epoch + burst * config.burst_period_s
            if t_burst >= end_epoch:
                break
            for pos in range(config.burst_size):
                loop_id = f"{spec.function_name}-b{burst:04d}-p{pos:02d}"
                plan.append(
                    PlannedCall(
                        from_epoch(t_burst + pos * config.pair_gap_s),
                        spec.function_name,
                        0,
                        loop_id,
                        1 if pos == 0 else 2,
                    )
                )
            burst += 1
    if not plan:
        raise EmptyPlanError(f"duration {config.duration_s}s fits no burst")
    plan.sort(key=lambda c: (c.virtual_time, c.function_name, c.loop_id))
    return plan


def plan_for_mode(config: CampaignConfig, start: datetime | None = None) -> list[PlannedCall]:
    if config.mode == "burst":
        return plan_burst(config, start)
    return plan_campaign(config, start)


@dataclass
class _SequencedCall:
    planned_epoch: float
    loop_id: str
    call_index: int
    chained: bool  # issue on previous call's completion, not at planned time


@dataclass
class _Sequence:
    function_name: str
    copy_index: int
    function_key: str
    spec: FunctionSpec
    calls: list[_SequencedCall] = field(default_factory=list)


def _build_sequences(config: CampaignConfig, plan: Sequence[PlannedCall]) -> list[_Sequence]:
    by_copy: dict[tuple[str, int], _Sequence] = {}
    ordered = sorted(plan, key=lambda c: (c.function_name, c.copy_index, c.virtual_time, c.loop_id, c.call_index))
    for call in ordered:
        key = (call.function_name, call.copy_index)
        seq = by_copy.get(key)
        if seq is None:
            spec = config.spec_by_name(call.function_name)
            seq = _Sequence(
                function_name=call.function_name,
                copy_index=call.copy_index,
                function_key=spec.key_for_copy(call.copy_index),
                spec=spec,
            )
            by_copy[key] = seq
        seq.calls.append(
            _SequencedCall(
                planned_epoch=to_epoch(call.virtual_time),
                loop_id=call.loop_id,
                call_index=call.call_index,
                chained=call.call_index == 2,
            )
        )
    return [by_copy[k] for k in sorted(by_copy)]


def _make_record(
    epoch: float,
    seq: _Sequence,
    call: _SequencedCall,
    outcome: InvocationOutcome,
    target_kind: str,
) -> InvocationRecord:
    return InvocationRecord(
        timestamp_utc=from_epoch(epoch),
        function_name=seq.function_name,
        workload=seq.spec.workload,
        memory_mb=seq.spec.memory_mb,
        copy_index=seq.copy_index,
        loop_id=call.loop_id,
        call_index=call.call_index,
        instance_id=outcome.instance_id,
        cold=outcome.cold,
        billed_duration_ms=outcome.billed_duration_ms,
        handler_duration_ms=outcome.handler_duration_ms,
        target_kind=target_kind,
        status=outcome.status,
    )


def run_campaign(
    config: CampaignConfig,
    target: InvocationTarget,
    clock,
    sink: RecordWriter,
    plan: Sequence[PlannedCall] | None = None,
    start: datetime | None = None,
    progress_every_s: float | None = None,
) -> CampaignSummary:
    """Execute a campaign plan against a target, appending one record per call.

    Virtual clocks run a single-threaded deterministic event loop; real
    clocks run one worker thread per copy so copies stay independent while
    the two calls within a pair remain strictly sequential.
    """
    wall_start = time.time()
    if plan is None:
        if start is None and config.start is None and not clock.is_virtual:
            start = from_epoch(clock.now())
        plan = plan_for_mode(config, start)
    summary = CampaignSummary()
    if not plan:
        return summary

    sequences = _build_sequences(config, plan)
    for seq in sequences:
        target.register(seq.function_key, seq.spec.memory_mb)
    try:
        target.probe(sequences[0].function_key)
    except Exception as exc:
        raise CampaignError(f"target probe failed: {exc}") from exc

    if clock.is_virtual:
        _run_virtual(sequences, target, clock, sink, summary)
    else:
        _run_threaded(sequences, target, clock, sink, summary, progress_every_s)
    summary.wall_time_s = time.time() - wall_start
    return summary


def _run_virtual(sequences, target, clock, sink, summary) -> None:
    pending: list[InvocationRecord] = []
    # (epoch, sequence index, position) -- tuple order gives deterministic ties
    heap: list[tuple[float, int, int]] = []
    for idx, seq in enumerate(sequences):
        if seq.calls:
            heapq.heappush(heap, (seq.calls[0].planned_epoch, idx, 0))
    while heap:
        epoch, idx, pos = heapq.heappop(heap)
        seq = sequences[idx]
        call = seq.calls[pos]
        clock.sleep_until(epoch)
        outcome = target.invoke(seq.function_key, call.loop_id, call.call_index, epoch)
        pending.append(_make_record(epoch, seq, call, outcome, target.kind))
        if len(pending) >= _FLUSH_EVERY:
            sink.append(pending)
            pending.clear()
        if outcome.status == "ok":
            summary.calls_made += 1
        else:
            summary.errors += 1
        completion = epoch + outcome.handler_duration_ms / 1000.0
        nxt = pos + 1
        if nxt < len(seq.calls):
            nxt_call = seq.calls[nxt]
            nxt_epoch = completion if nxt_call.chained else max(nxt_call.planned_epoch, completion)
            heapq.heappush(heap, (nxt_epoch, idx, nxt))
    if pending:
        sink.append(pending)


def _run_threaded(sequences, target, clock, sink, summary, progress_every_s) -> None:
    lock = threading.Lock()
    last_report = [time.time()]

    def worker(seq: _Sequence) -> None:
        completion = -math.inf
        for call in seq.calls:
            if call.chained:
                wake = completion
            else:
                wake = call.planned_epoch
            clock.sleep_until(wake)
            epoch = clock.now()
            outcome = target.invoke(seq.function_key, call.loop_id, call.call_index, epoch)
            sink.append([_make_record(epoch, seq, call, outcome, target.kind)])
            completion = clock.now()
            with lock:
                if outcome.status == "ok":
                    summary.calls_made += 1
                else:
                    summary.errors += 1
                if progress_every_s and time.time() - last_report[0] >= progress_every_s:
                    last_report[0] = time.time()
                    log.info(
                        "campaign progress: %d calls ok, %d errors",
                        summary.calls_made,
                        summary.errors,
                    )

    threads = [threading.Thread(target=worker, args=(seq,), daemon=True) for seq in sequences]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
