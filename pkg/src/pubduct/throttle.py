"""Per-subscription throttling with a bounded drop-oldest queue.

Applied at the tunnel boundary only: the link is the scarce resource,
so messages are admitted as fast as the bus produces them and emission
onto the tunnel is paced. All timing comes from the caller; nothing
here reads a clock, which keeps the algorithm byte-for-byte
reproducible under the simulator.

Accounting invariant, maintained at every step:
    admitted == emitted + len(queue) + dropped
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional


@dataclass(frozen=True)
class ThrottleSpec:
    throttle_rate: int = 0  # minimum ms between emissions; 0 = unlimited
    queue_length: int = 1

    def __post_init__(self):
        if self.throttle_rate < 0:
            raise ValueError("throttle_rate must be >= 0")
        if self.queue_length < 1:
            raise ValueError("queue_length must be >= 1")


@dataclass
class ThrottleState:
    last_emit_ms: Optional[float] = None
    queue: deque = field(default_factory=deque)
    admitted: int = 0
    emitted: int = 0
    dropped: int = 0

    def conserved(self) -> bool:
        return self.admitted == self.emitted + len(self.queue) + self.dropped


def admit(state: ThrottleState, spec: ThrottleSpec, message, now_ms: float) -> str:
    """Admit one message; returns "emit", "queued" or "dropped".

    Emits immediately only when the queue is empty and the throttle
    window has elapsed; otherwise the message is queued, evicting the
    oldest entry when full. "dropped" means this admission caused an
    eviction (of the oldest entry, which may be an earlier message).
    """
    state.admitted += 1
    window_open = (
        state.last_emit_ms is None
        or now_ms - state.last_emit_ms >= spec.throttle_rate
    )
    if window_open and not state.queue:
        state.emitted += 1
        state.last_emit_ms = now_ms
        return "emit"
    evicted = False
    if len(state.queue) >= spec.queue_length:
        state.queue.popleft()
        state.dropped += 1
        evicted = True
    state.queue.append(message)
    return "dropped" if evicted else "queued"


def tick(state: ThrottleState, spec: ThrottleSpec, now_ms: float) -> list:
    """Drain as many queued messages as elapsed throttle windows allow.

    Each emission advances last_emit by one throttle_rate, so a late
    tick may emit several messages at once without exceeding the
    long-run rate.
    """
    if not state.queue:
        return []
    if spec.throttle_rate == 0 or state.last_emit_ms is None:
        emissions = list(state.queue)
        state.queue.clear()
        state.emitted += len(emissions)
        state.last_emit_ms = now_ms
        return emissions
    allowed = int((now_ms - state.last_emit_ms) // spec.throttle_rate)
    emissions = []
    while allowed > 0 and state.queue:
        emissions.append(state.queue.popleft())
        state.last_emit_ms += spec.throttle_rate
        allowed -= 1
    state.emitted += len(emissions)
    return emissions


def next_ready_ms(state: ThrottleState, spec: ThrottleSpec) -> Optional[float]:
    """Time at which the next queued message may be emitted, or None if idle."""
    if not state.queue:
        return None
    if spec.throttle_rate == 0 or state.last_emit_ms is None:
        return state.last_emit_ms or 0.0
    return state.last_emit_ms + spec.throttle_rate


def flush(state: ThrottleState) -> int:
    """Drop everything still queued (link went away); returns count dropped."""
    count = len(state.queue)
    state.queue.clear()
    state.dropped += count
    return count
