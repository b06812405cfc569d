"""Shared test fixtures and the acceptance-criteria reporter."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest

from variability.records import InvocationRecord

_ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, ok: bool, detail: str = "") -> None:
    _ACCEPTANCE_RESULTS.append((name, ok, detail))


@pytest.fixture
def acceptance():
    """Recorder for acceptance-criterion outcomes, echoed after the run."""
    return record_acceptance


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {name}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)


def make_record(
    *,
    at: datetime | None = None,
    function_name: str = "float-128",
    workload: str = "float",
    memory_mb: int = 128,
    copy_index: int = 0,
    loop_id: str = "float-128-c00-l00000",
    call_index: int = 1,
    instance_id: str = "i-000001",
    cold: bool = True,
    billed_duration_ms: float = 1000.0,
    handler_duration_ms: float = 999.5,
    target_kind: str = "sim",
    status: str = "ok",
) -> InvocationRecord:
    return InvocationRecord(
        timestamp_utc=at or datetime(2022, 12, 12, 0, 0, tzinfo=timezone.utc),
        function_name=function_name,
        workload=workload,
        memory_mb=memory_mb,
        copy_index=copy_index,
        loop_id=loop_id,
        call_index=call_index,
        instance_id=instance_id,
        cold=cold,
        billed_duration_ms=billed_duration_ms,
        handler_duration_ms=handler_duration_ms,
        target_kind=target_kind,
        status=status,
    )


@pytest.fixture
def record_factory():
    return make_record
