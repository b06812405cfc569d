"""Clock abstraction so campaigns run on real or virtual time.

Schedulers only ever call :meth:`now` and :meth:`sleep_until`, which lets a
simulated campaign replay weeks of measurements in seconds while a live
campaign paces itself against the wall clock.
"""

from __future__ import annotations

import time
from datetime import datetime, timezone


def to_epoch(ts: datetime) -> float:
    return ts.timestamp()


def from_epoch(epoch: float) -> datetime:
    return datetime.fromtimestamp(epoch, tz=timezone.utc)


class RealClock:
    """Wall-clock time; sleep_until blocks."""

    is_virtual = False

    def now(self) -> float:
        return time.time()

    def sleep_until(self, epoch: float) -> None:
        delay = epoch - time.time()
        if delay > 0:
            time.sleep(delay)


class VirtualClock:
    """Simulated time: sleep_until jumps forward instantly.

    With a positive ``pacing`` factor the clock instead sleeps
    ``delta / pacing`` wall seconds, which keeps virtual ordering while
    still exercising real waiting paths.
    """

    is_virtual = True

    def __init__(self, start_epoch: float, pacing: float | None = None):
        self._now = start_epoch
        if pacing is not None and pacing <= 0:
            raise ValueError("pacing must be positive")
        self._pacing = pacing

    def now(self) -> float:
        return self._now

    def sleep_until(self, epoch: float) -> None:
        if epoch <= self._now:
            return
        if self._pacing:
            time.sleep((epoch - self._now) / self._pacing)
        self._now = epoch

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot move a clock backwards")
        self._now += seconds


class AcceleratedClock:
    """Real time scaled by a factor; used to compress live smoke campaigns.

    ``now()`` returns ``start + factor * real_elapsed``, and sleeping until a
    target time costs ``delta / factor`` wall seconds. Calls against live
    targets still take real time, so the factor only compresses waits.
    """

    is_virtual = False

    def __init__(self, factor: float, start_epoch: float | None = None):
        if factor <= 0:
            raise ValueError("factor must be positive")
        self.factor = factor
        self._real_start = time.time()
        self._start = self._real_start if start_epoch is None else start_epoch

    def now(self) -> float:
        return self._start + (time.time() - self._real_start) * self.factor

    def sleep_until(self, epoch: float) -> None:
        delay = (epoch - self.now()) / self.factor
        if delay > 0:
            time.sleep(delay)
