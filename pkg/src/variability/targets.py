"""Uniform invocation interface over HTTP function endpoints and the simulator.

Both target kinds produce an :class:`InvocationOutcome`; the scheduler never
needs to know which one it is talking to.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Protocol

import requests

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 60.0


@dataclass(frozen=True)
class InvocationOutcome:
    """What a single call returned: instance identity, timing, and status."""

    instance_id: str
    cold: bool
    handler_duration_ms: float
    billed_duration_ms: float
    status: str = "ok"
    error_detail: str | None = None

    @staticmethod
    def failure(detail: str) -> "InvocationOutcome":
        return InvocationOutcome(
            instance_id="",
            cold=False,
            handler_duration_ms=0.0,
            billed_duration_ms=0.0,
            status="error",
            error_detail=detail,
        )


def quantize_billed(raw_ms: float, quantum_ms: float) -> float:
    """Round a raw duration up to the provider's billing granularity.

    Returns ``quantum_ms * ceil(raw_ms / quantum_ms)`` with a tiny relative
    guard so exact multiples are not pushed to the next quantum by float
    error. Monotone non-decreasing in ``raw_ms`` and idempotent on multiples.
    """
    if quantum_ms <= 0:
        raise ValueError(f"quantum_ms must be positive, got {quantum_ms}")
    if raw_ms < 0:
        raise ValueError(f"raw_ms must be non-negative, got {raw_ms}")
    if raw_ms == 0:
        return 0.0
    steps = math.ceil(raw_ms / quantum_ms - 1e-9)
    return quantum_ms * max(steps, 1)


class InvocationTarget(Protocol):
    """A thing the scheduler can invoke: a live endpoint or the simulator."""

    kind: str

    def register(self, function_key: str, memory_mb: int) -> None:
        """Declare a function key ahead of use; raise if it cannot be served."""

    def probe(self, function_key: str) -> None:
        """Raise if the target is unreachable; must not perturb measurements."""

    def invoke(
        self, function_key: str, loop_id: str, call_index: int, at_epoch: float
    ) -> InvocationOutcome: ...


class HttpTarget:
    """POSTs the workload request contract to per-copy endpoint URLs.

    ``endpoints`` maps function keys (``name#copyN``) to URLs. Billed duration
    is approximated from the handler-reported duration plus quantization; a
    provider-log ingestion adapter would replace this for platforms that
    report billing out of band.
    """

    kind = "http"

    def __init__(
        self,
        endpoints: dict[str, str],
        billing_quantum_ms: float = 1.0,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        bearer_token: str | None = None,
        run_id: str = "run",
    ):
        self.endpoints = dict(endpoints)
        self.billing_quantum_ms = billing_quantum_ms
        self.timeout_s = timeout_s
        self.run_id = run_id
        self._session = requests.Session()
        if bearer_token:
            self._session.headers["Authorization"] = f"Bearer {bearer_token}"

    def _url(self, function_key: str) -> str:
        try:
            return self.endpoints[function_key]
        except KeyError:
            raise KeyError(f"no endpoint configured for {function_key!r}") from None

    def register(self, function_key: str, memory_mb: int) -> None:
        self._url(function_key)  # fail fast on missing endpoint config

    def probe(self, function_key: str) -> None:
        response = self._session.post(
            self._url(function_key),
            json={"run_id": self.run_id, "loop_id": "probe", "call_index": 1},
            timeout=self.timeout_s,
        )
        response.raise_for_status()

    def invoke(
        self, function_key: str, loop_id: str, call_index: int, at_epoch: float
    ) -> InvocationOutcome:
        payload = {"run_id": self.run_id, "loop_id": loop_id, "call_index": call_index}
        try:
            response = self._session.post(
                self._url(function_key), json=payload, timeout=self.timeout_s
            )
            response.raise_for_status()
        except requests.RequestException as exc:
            log.debug("call %s/%s failed: %s", loop_id, call_index, exc)
            return InvocationOutcome.failure(str(exc))
        try:
            body = response.json()
        except ValueError as exc:
            return InvocationOutcome.failure(f"unparseable response body: {exc}")
        try:
            handler_ms = float(body["handler_duration_ms"])
            return InvocationOutcome(
                instance_id=str(body["instance_id"]),
                cold=bool(body["cold"]),
                handler_duration_ms=handler_ms,
                billed_duration_ms=quantize_billed(handler_ms, self.billing_quantum_ms),
            )
        except (KeyError, TypeError, ValueError) as exc:
            return InvocationOutcome.failure(f"response missing workload fields: {exc}")


class SimTarget:
    """Adapter handing calls to an in-process simulator state."""

    kind = "sim"

    def __init__(self, state):
        self._state = state

    def register(self, function_key: str, memory_mb: int) -> None:
        self._state.register(function_key, memory_mb)

    def probe(self, function_key: str) -> None:
        # The simulator is always reachable; a real probe call would consume
        # scenario state and make the first planned call spuriously warm.
        self._state.require_known(function_key)

    def invoke(
        self, function_key: str, loop_id: str, call_index: int, at_epoch: float
    ) -> InvocationOutcome:
        return self._state.invoke(function_key, call_index, at_epoch)
