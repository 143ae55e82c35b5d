"""Injected time source.

Everything that reads time or sets timers (join windows, pollers, the
inject node's interval) goes through a Clock so tests and scenario runs
can execute in virtual time with no real sleeping.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from typing import Callable


class TimerHandle:
    """Cancellation handle returned by Clock.schedule()."""

    __slots__ = ("_cancel",)

    def __init__(self, cancel: Callable[[], None]):
        self._cancel = cancel

    def cancel(self) -> None:
        self._cancel()


class Clock:
    """Time source and one-shot timer scheduler."""

    def now_ms(self) -> int:
        raise NotImplementedError

    def schedule(self, delay_ms: int, callback: Callable[[], None]) -> TimerHandle:
        """Run callback once after delay_ms.

        Callbacks may fire on an arbitrary thread (real clock) or on the
        thread advancing the clock (virtual clock); they must only enqueue
        work, never execute node logic inline.
        """
        raise NotImplementedError


class RealClock(Clock):
    """Wall-clock time; timers are threading.Timer instances."""

    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def schedule(self, delay_ms: int, callback: Callable[[], None]) -> TimerHandle:
        timer = threading.Timer(max(delay_ms, 0) / 1000.0, callback)
        timer.daemon = True
        timer.start()
        return TimerHandle(timer.cancel)


class VirtualClock(Clock):
    """Manually advanced clock.

    advance_to() fires due timers in timestamp order (ties broken by
    scheduling order) on the advancing thread, so a whole scenario run is
    a deterministic single-threaded computation.
    """

    def __init__(self, start_ms: int = 0):
        self._now_ms = start_ms
        self._timers: list[tuple[int, int, dict]] = []  # (due_ms, seq, entry)
        self._seq = itertools.count()
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            return self._now_ms

    def schedule(self, delay_ms: int, callback: Callable[[], None]) -> TimerHandle:
        entry = {"callback": callback, "cancelled": False}
        with self._lock:
            due = self._now_ms + max(int(delay_ms), 0)
            heapq.heappush(self._timers, (due, next(self._seq), entry))

        def cancel() -> None:
            entry["cancelled"] = True

        return TimerHandle(cancel)

    def advance(self, delta_ms: int) -> None:
        self.advance_to(self.now_ms() + int(delta_ms))

    def advance_to(self, target_ms: int) -> None:
        """Move time forward to target_ms, firing every timer due on the way.

        A timer callback may schedule new timers; those fire too if they
        fall before the target.
        """
        while True:
            with self._lock:
                if target_ms < self._now_ms:
                    raise ValueError("virtual time cannot move backwards")
                if self._timers and self._timers[0][0] <= target_ms:
                    due, _, entry = heapq.heappop(self._timers)
                    # Time reaches the timer's due point before it fires.
                    self._now_ms = max(self._now_ms, due)
                else:
                    self._now_ms = target_ms
                    return
            if not entry["cancelled"]:
                entry["callback"]()
