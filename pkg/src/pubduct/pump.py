"""Relay pipeline for one topic: bus subscription -> throttle -> tunnel.

Used on both sides of the tunnel (bridge serving a client subscription,
duct forwarding a configured local topic). The pump never reads wall
time and never blocks; the bus notifies it, it drains through the
throttle on the session clock, and schedules a tick when messages are
left waiting for the throttle window.

Messages are skipped (not admitted) in two cases that the accounting
keeps apart from throttle drops: provenance-tagged messages this pump's
own session republished (echo prevention), and messages arriving while
the relay is disabled or the session is paused.
"""

from __future__ import annotations

from typing import Callable, Optional

from .bus import BusMessage, LocalBus
from .clock import Clock
from .throttle import ThrottleSpec, ThrottleState, admit, flush, next_ready_ms, tick


class TopicPump:
    def __init__(
        self,
        bus: LocalBus,
        topic: str,
        spec: ThrottleSpec,
        clock: Clock,
        emit: Callable[[BusMessage], None],
        *,
        skip_origin: Optional[str] = None,
        is_enabled: Optional[Callable[[], bool]] = None,
        on_suppressed: Optional[Callable[[BusMessage], None]] = None,
        on_drop: Optional[Callable[[BusMessage], None]] = None,
    ):
        self.topic = topic
        self.spec = spec
        self.clock = clock
        self.emit = emit
        self.skip_origin = skip_origin
        self.is_enabled = is_enabled
        self.on_suppressed = on_suppressed
        self.on_drop = on_drop
        self.state = ThrottleState()
        self.paused = False
        self.paused_dropped = 0
        self._tick_timer = None
        self._drain_scheduled = False
        self._closed = False
        queue_length = max(spec.queue_length * 2, 16)
        self.subscription = bus.subscribe(topic, queue_length, listener=self._notify)

    def _notify(self) -> None:
        if self._drain_scheduled or self._closed:
            return
        self._drain_scheduled = True
        self.clock.post(self._drain)

    def _drain(self) -> None:
        self._drain_scheduled = False
        if self._closed:
            return
        now = self.clock.now_ms()
        while (message := self.subscription.poll()) is not None:
            if self.skip_origin is not None and message.origin == self.skip_origin:
                continue
            if self.is_enabled is not None and not self.is_enabled():
                if self.on_suppressed is not None:
                    self.on_suppressed(message)
                continue
            if self.paused:
                self.paused_dropped += 1
                continue
            decision = admit(self.state, self.spec, message, now)
            if decision == "emit":
                self.emit(message)
            elif decision == "dropped" and self.on_drop is not None:
                self.on_drop(message)
        self._drain_queue()

    def _drain_queue(self) -> None:
        if self.paused or self._closed:
            return
        for message in tick(self.state, self.spec, self.clock.now_ms()):
            self.emit(message)
        self._schedule_tick()

    def _schedule_tick(self) -> None:
        if self._tick_timer is not None:
            self._tick_timer.cancel()
            self._tick_timer = None
        ready = next_ready_ms(self.state, self.spec)
        if ready is None or self.paused or self._closed:
            return
        self._tick_timer = self.clock.call_at(
            max(ready, self.clock.now_ms()), self._on_tick
        )

    def _on_tick(self) -> None:
        self._tick_timer = None
        self._drain_queue()

    def update_spec(self, spec: ThrottleSpec) -> None:
        self.spec = spec
        while len(self.state.queue) > spec.queue_length:
            self.state.queue.popleft()
            self.state.dropped += 1
        self._schedule_tick()

    def pause(self) -> int:
        """Stop emitting; messages already throttle-queued count as dropped."""
        self.paused = True
        if self._tick_timer is not None:
            self._tick_timer.cancel()
            self._tick_timer = None
        return flush(self.state)

    def resume(self) -> None:
        self.paused = False
        self._notify()
        self._schedule_tick()

    def close(self) -> None:
        self._closed = True
        if self._tick_timer is not None:
            self._tick_timer.cancel()
            self._tick_timer = None
        self.subscription.close()
