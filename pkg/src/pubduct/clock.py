"""Injectable time source shared by the bus, relays, and the simulator.

Protocol cores never read wall-clock time or sleep; they ask the clock
for "now" and schedule callbacks. The simulator drives the same
interface from a discrete-event queue, real deployments use
ThreadedClock, whose single executor thread also serializes callbacks
posted from other threads (websocket readers, bus publishers).
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from typing import Callable, Optional, Protocol


class Timer(Protocol):
    def cancel(self) -> None: ...


class Clock(Protocol):
    def now_ms(self) -> float: ...

    def call_at(self, when_ms: float, fn: Callable[[], None]) -> Timer: ...

    def call_later(self, delay_ms: float, fn: Callable[[], None]) -> Timer: ...

    def post(self, fn: Callable[[], None]) -> Timer:
        """Schedule fn on the clock's execution context as soon as possible.

        The one entry point that is safe from foreign threads.
        """
        ...


class _ScheduledCall:
    __slots__ = ("when_ms", "seq", "fn", "cancelled")

    def __init__(self, when_ms: float, seq: int, fn: Callable[[], None]):
        self.when_ms = when_ms
        self.seq = seq
        self.fn = fn
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __lt__(self, other: "_ScheduledCall") -> bool:
        return (self.when_ms, self.seq) < (other.when_ms, other.seq)


class ThreadedClock:
    """Wall-clock scheduler with one executor thread running all callbacks."""

    def __init__(self, name: str = "pubduct-clock"):
        self._heap: list[_ScheduledCall] = []
        self._lock = threading.Lock()
        self._wakeup = threading.Condition(self._lock)
        self._seq = itertools.count()
        self._origin = time.monotonic()
        self._stopped = False
        self._thread = threading.Thread(target=self._run, name=name, daemon=True)
        self._thread.start()

    def now_ms(self) -> float:
        return (time.monotonic() - self._origin) * 1000.0

    def call_at(self, when_ms: float, fn: Callable[[], None]) -> _ScheduledCall:
        call = _ScheduledCall(when_ms, next(self._seq), fn)
        with self._wakeup:
            if self._stopped:
                raise RuntimeError("clock stopped")
            heapq.heappush(self._heap, call)
            self._wakeup.notify()
        return call

    def call_later(self, delay_ms: float, fn: Callable[[], None]) -> _ScheduledCall:
        return self.call_at(self.now_ms() + max(0.0, delay_ms), fn)

    def post(self, fn: Callable[[], None]) -> _ScheduledCall:
        return self.call_at(self.now_ms(), fn)

    def stop(self, join: bool = True) -> None:
        with self._wakeup:
            self._stopped = True
            self._wakeup.notify()
        if join and threading.current_thread() is not self._thread:
            self._thread.join(timeout=5.0)

    def _run(self) -> None:
        while True:
            with self._wakeup:
                if self._stopped:
                    return
                if not self._heap:
                    self._wakeup.wait()
                    continue
                head = self._heap[0]
                delay_s = (head.when_ms - self.now_ms()) / 1000.0
                if delay_s > 0:
                    self._wakeup.wait(timeout=delay_s)
                    continue
                call = heapq.heappop(self._heap)
            if call.cancelled:
                continue
            try:
                call.fn()
            except Exception:  # callbacks must not kill the executor
                import logging

                logging.getLogger("pubduct.clock").exception(
                    "unhandled error in scheduled callback"
                )


class ManualClock:
    """Hand-advanced clock for unit tests that do not need a full simulator."""

    def __init__(self, start_ms: float = 0.0):
        self._now = start_ms
        self._heap: list[_ScheduledCall] = []
        self._seq = itertools.count()

    def now_ms(self) -> float:
        return self._now

    def call_at(self, when_ms: float, fn: Callable[[], None]) -> _ScheduledCall:
        call = _ScheduledCall(max(when_ms, self._now), next(self._seq), fn)
        heapq.heappush(self._heap, call)
        return call

    def call_later(self, delay_ms: float, fn: Callable[[], None]) -> _ScheduledCall:
        return self.call_at(self._now + max(0.0, delay_ms), fn)

    def post(self, fn: Callable[[], None]) -> _ScheduledCall:
        return self.call_at(self._now, fn)

    def advance(self, delta_ms: float) -> int:
        """Run all callbacks due within the next delta_ms; returns count run."""
        target = self._now + delta_ms
        executed = 0
        while self._heap and self._heap[0].when_ms <= target:
            call = heapq.heappop(self._heap)
            if call.cancelled:
                continue
            self._now = max(self._now, call.when_ms)
            call.fn()
            executed += 1
        self._now = target
        return executed
