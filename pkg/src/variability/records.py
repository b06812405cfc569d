"""Invocation records, start-type classification, and JSONL persistence.

The JSONL file written here is the contract between the campaign runners
(``run``/``simulate``) and ``analyze``: one record per line, UTF-8, keys in
the fixed order given by :data:`FIELD_ORDER`, timestamps RFC 3339 in UTC.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable

WORKLOADS = ("float", "matrix")
TARGET_KINDS = ("http", "sim")
STATUSES = ("ok", "error")

# Serialization order of record fields; part of the on-disk contract.
FIELD_ORDER = (
    "timestamp_utc",
    "function_name",
    "workload",
    "memory_mb",
    "copy_index",
    "loop_id",
    "call_index",
    "instance_id",
    "cold",
    "billed_duration_ms",
    "handler_duration_ms",
    "target_kind",
    "status",
)


class RecordError(Exception):
    """Base class for record storage and classification errors."""


class RecordWriteError(RecordError):
    """Raised when appending fails; ``written`` counts records already stored."""

    def __init__(self, message: str, written: int):
        super().__init__(message)
        self.written = written


class RecordParseError(RecordError):
    """Raised when a records file contains unparseable lines."""

    def __init__(self, source: str, line_numbers: list[int], details: list[str]):
        self.line_numbers = line_numbers
        self.details = details
        listed = ", ".join(str(n) for n in line_numbers)
        super().__init__(f"{source}: malformed record on line(s) {listed}")


class ClassificationError(RecordError):
    """Raised when a record cannot be classified (status != ok)."""


class StartClass(Enum):
    """Start type of a single call, derived from its loop position and cold flag."""

    EXPECTED_COLD = "expected_cold"
    EXPECTED_WARM = "expected_warm"
    UNEXPECTED_COLD = "unexpected_cold"
    UNEXPECTED_WARM = "unexpected_warm"


def _validate_timestamp(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        raise ValueError("timestamp_utc must be timezone-aware")
    ts = ts.astimezone(timezone.utc)
    # Quantize to millisecond precision so serialization is lossless.
    return ts.replace(microsecond=(ts.microsecond // 1000) * 1000)


@dataclass(frozen=True)
class InvocationRecord:
    """Outcome of one function invocation; the atom of the dataset."""

    timestamp_utc: datetime
    function_name: str
    workload: str
    memory_mb: int
    copy_index: int
    loop_id: str
    call_index: int
    instance_id: str
    cold: bool
    billed_duration_ms: float
    handler_duration_ms: float
    target_kind: str
    status: str

    def __post_init__(self):
        object.__setattr__(self, "timestamp_utc", _validate_timestamp(self.timestamp_utc))
        if self.workload not in WORKLOADS:
            raise ValueError(f"unknown workload {self.workload!r}")
        if self.memory_mb <= 0 or self.memory_mb % 128 != 0:
            raise ValueError(f"memory_mb must be a positive multiple of 128, got {self.memory_mb}")
        if self.copy_index < 0:
            raise ValueError("copy_index must be non-negative")
        if self.call_index not in (1, 2):
            raise ValueError(f"call_index must be 1 or 2, got {self.call_index}")
        if self.billed_duration_ms < 0:
            raise ValueError("billed_duration_ms must be non-negative")
        if self.handler_duration_ms < 0:
            raise ValueError("handler_duration_ms must be non-negative")
        if self.target_kind not in TARGET_KINDS:
            raise ValueError(f"unknown target_kind {self.target_kind!r}")
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")


def classify(record: InvocationRecord) -> StartClass:
    """Map a record's (call_index, cold) pair to its start class.

    Total over {1, 2} x {cold, warm}: the first call of a loop is expected to
    be cold, the second expected to be warm; the other two combinations are
    the unexpected cases. Records with status ``error`` are refused.
    """
    if record.status != "ok":
        raise ClassificationError(
            f"cannot classify record with status={record.status!r} (loop {record.loop_id})"
        )
    if record.call_index == 1:
        return StartClass.EXPECTED_COLD if record.cold else StartClass.UNEXPECTED_WARM
    return StartClass.UNEXPECTED_COLD if record.cold else StartClass.EXPECTED_WARM


def format_timestamp(ts: datetime) -> str:
    """RFC 3339 with millisecond precision and a Z suffix."""
    return ts.astimezone(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def parse_timestamp(raw: str) -> datetime:
    # Python 3.10 fromisoformat does not accept the Z suffix.
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {raw!r} lacks a UTC offset")
    return ts.astimezone(timezone.utc)


def record_to_json(record: InvocationRecord) -> str:
    fields = {
        "timestamp_utc": format_timestamp(record.timestamp_utc),
        "function_name": record.function_name,
        "workload": record.workload,
        "memory_mb": record.memory_mb,
        "copy_index": record.copy_index,
        "loop_id": record.loop_id,
        "call_index": record.call_index,
        "instance_id": record.instance_id,
        "cold": record.cold,
        "billed_duration_ms": record.billed_duration_ms,
        "handler_duration_ms": record.handler_duration_ms,
        "target_kind": record.target_kind,
        "status": record.status,
    }
    return json.dumps(fields, separators=(", ", ": "))


def record_from_json(line: str) -> InvocationRecord:
    data = json.loads(line)
    missing = [f for f in FIELD_ORDER if f not in data]
    if missing:
        raise ValueError(f"missing fields: {missing}")
    return InvocationRecord(
        timestamp_utc=parse_timestamp(data["timestamp_utc"]),
        function_name=data["function_name"],
        workload=data["workload"],
        memory_mb=int(data["memory_mb"]),
        copy_index=int(data["copy_index"]),
        loop_id=data["loop_id"],
        call_index=int(data["call_index"]),
        instance_id=data["instance_id"],
        cold=bool(data["cold"]),
        billed_duration_ms=float(data["billed_duration_ms"]),
        handler_duration_ms=float(data["handler_duration_ms"]),
        target_kind=data["target_kind"],
        status=data["status"],
    )


class RecordWriter:
    """Append-only JSONL sink, safe for concurrent writers within one process."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, records: Iterable[InvocationRecord]) -> int:
        return append_records(self.path, records, lock=self._lock)


def append_records(
    sink: str | Path, records: Iterable[InvocationRecord], lock: threading.Lock | None = None
) -> int:
    """Append records to a JSONL sink. Returns the number written.

    Line writes are serialized under ``lock`` (or a throwaway one), so
    concurrent appends through a shared :class:`RecordWriter` never interleave
    partial lines. On I/O failure the raised :class:`RecordWriteError` carries
    the count written before the failure.
    """
    lock = lock or threading.Lock()
    written = 0
    records = list(records)
    if not records:
        return 0
    with lock:
        try:
            with open(sink, "a", encoding="utf-8") as fh:
                for record in records:
                    fh.write(record_to_json(record) + "\n")
                    written += 1
        except OSError as exc:
            raise RecordWriteError(f"append to {sink} failed: {exc}", written=written) from exc
    return written


def load_records(
    source: str | Path,
    function_name: str | None = None,
    memory_mb: int | None = None,
    start: datetime | None = None,
    end: datetime | None = None,
) -> list[InvocationRecord]:
    """Load records from a JSONL file, sorted by timestamp.

    Optional filters restrict by function name, memory tier, and half-open
    time range ``[start, end)``. Malformed lines are collected and reported
    with their line numbers instead of being silently dropped.
    """
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"records file not found: {path}")
    out: list[InvocationRecord] = []
    bad_lines: list[int] = []
    details: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = record_from_json(line)
            except (ValueError, KeyError, TypeError) as exc:
                bad_lines.append(lineno)
                details.append(str(exc))
                continue
            if function_name is not None and record.function_name != function_name:
                continue
            if memory_mb is not None and record.memory_mb != memory_mb:
                continue
            if start is not None and record.timestamp_utc < start:
                continue
            if end is not None and record.timestamp_utc >= end:
                continue
            out.append(record)
    if bad_lines:
        raise RecordParseError(str(path), bad_lines, details)
    out.sort(key=lambda r: (r.timestamp_utc, r.loop_id, r.call_index))
    return out
