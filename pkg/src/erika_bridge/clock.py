"""Time sources: real monotonic time and a controllable virtual clock.

Pacing, buffer drain, and session timeouts all go through a Clock so the
whole system can run deterministically (and fast) in tests. The virtual
clock advances only when told to; scheduled callbacks fire in timestamp
order as time passes over them.
"""

from __future__ import annotations

import heapq
import threading
import time
from typing import Callable, Protocol


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...

    def call_later(self, delay: float, fn: Callable[[], None]) -> None: ...


class MonotonicClock:
    """Wall-clock implementation backed by time.monotonic."""

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def call_later(self, delay: float, fn: Callable[[], None]) -> None:
        timer = threading.Timer(max(0.0, delay), fn)
        timer.daemon = True
        timer.start()


class VirtualClock:
    """Deterministic clock for tests.

    sleep() advances virtual time immediately (no wall-clock wait) and fires
    any callbacks scheduled inside the slept interval, at their scheduled
    instants, in order. Callbacks may schedule further callbacks.
    """

    def __init__(self, start: float = 0.0) -> None:
        self._now = start
        self._timers: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = 0
        self._lock = threading.RLock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)

    def call_later(self, delay: float, fn: Callable[[], None]) -> None:
        with self._lock:
            self._seq += 1
            heapq.heappush(self._timers, (self._now + max(0.0, delay), self._seq, fn))

    def advance(self, seconds: float) -> None:
        """Move time forward, running due callbacks at their own timestamps."""
        if seconds < 0:
            raise ValueError("cannot advance backwards")
        with self._lock:
            target = self._now + seconds
        while True:
            with self._lock:
                if not self._timers or self._timers[0][0] > target:
                    self._now = target
                    return
                when, _, fn = heapq.heappop(self._timers)
                self._now = max(self._now, when)
            fn()  # outside the lock: callbacks may re-schedule

    def pending_timers(self) -> int:
        with self._lock:
            return len(self._timers)
