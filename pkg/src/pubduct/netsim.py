"""Deterministic simulated transport between duct and bridge.

Single-threaded discrete-event core: the system under test runs
cooperatively on SimClock, so a scenario is a pure function of
(link profile, workload, seed) and its trace is byte-reproducible.

Stream semantics: the tunnel is a reliable in-order byte stream, so
frame loss and scripted outage windows surface as connection breaks,
never as silent per-frame drops. An outage window kills the connection
*silently* at the window start; each endpoint discovers the death only
when its own next send fails (which is why keepalive pings matter) —
frames already in flight into a dead window vanish with the stream.
Frames on a live connection are serialized through the bandwidth cap:
transmission starts when the link is free, which is what bounds
delivered bytes per second.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .clock import _ScheduledCall
from .codec import Encoding
from .errors import PubductError


class HandshakeRefused(PubductError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class SimClock:
    """Discrete-event clock; events run in (time, insertion order)."""

    def __init__(self, start_ms: float = 0.0):
        self.now_ms_value = start_ms
        self._heap: list[_ScheduledCall] = []
        self._seq = 0

    def now_ms(self) -> float:
        return self.now_ms_value

    def call_at(self, when_ms: float, fn: Callable[[], None]) -> _ScheduledCall:
        call = _ScheduledCall(max(when_ms, self.now_ms_value), self._seq, fn)
        self._seq += 1
        heapq.heappush(self._heap, call)
        return call

    def call_later(self, delay_ms: float, fn: Callable[[], None]) -> _ScheduledCall:
        return self.call_at(self.now_ms_value + max(0.0, delay_ms), fn)

    def post(self, fn: Callable[[], None]) -> _ScheduledCall:
        return self.call_at(self.now_ms_value, fn)

    def pending(self) -> bool:
        return any(not c.cancelled for c in self._heap)

    def step(self) -> int:
        """Advance to the next event time and run every event due then."""
        while self._heap and self._heap[0].cancelled:
            heapq.heappop(self._heap)
        if not self._heap:
            return 0
        when = self._heap[0].when_ms
        self.now_ms_value = when
        executed = 0
        while self._heap and self._heap[0].when_ms <= when:
            call = heapq.heappop(self._heap)
            if call.cancelled:
                continue
            call.fn()
            executed += 1
        return executed

    def run_until(self, when_ms: float) -> int:
        """Run all events scheduled up to when_ms; clock ends at when_ms."""
        executed = 0
        while self._heap:
            while self._heap and self._heap[0].cancelled:
                heapq.heappop(self._heap)
            if not self._heap or self._heap[0].when_ms > when_ms:
                break
            executed += self.step()
        self.now_ms_value = max(self.now_ms_value, when_ms)
        return executed


@dataclass(frozen=True)
class TraceEntry:
    time_ms: float
    event: str
    detail: str

    def render(self) -> str:
        return f"{self.time_ms:.3f}\t{self.event}\t{self.detail}"


class Trace:
    """Ordered log of everything observable: line-delimited, reproducible."""

    def __init__(self, clock: SimClock):
        self._clock = clock
        self.entries: list[TraceEntry] = []

    def emit(self, event: str, detail: str = "") -> None:
        self.entries.append(TraceEntry(self._clock.now_ms(), event, detail))

    def lines(self) -> list[str]:
        return [e.render() for e in self.entries]

    def render(self) -> str:
        return "\n".join(self.lines()) + ("\n" if self.entries else "")

    def count(self, event: str, contains: str = "") -> int:
        return sum(
            1
            for e in self.entries
            if e.event == event and (not contains or contains in e.detail)
        )

    def select(self, event: str, contains: str = "") -> list[TraceEntry]:
        return [
            e
            for e in self.entries
            if e.event == event and (not contains or contains in e.detail)
        ]


@dataclass(frozen=True)
class LinkProfile:
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    loss_prob: float = 0.0
    bandwidth_bytes_per_s: Optional[float] = None
    disconnects: tuple = ()  # ((start_ms, duration_ms), ...) sorted, disjoint
    seed: int = 0

    def __post_init__(self):
        if self.latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency/jitter must be >= 0")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        if self.bandwidth_bytes_per_s is not None and self.bandwidth_bytes_per_s <= 0:
            raise ValueError("bandwidth must be > 0")
        windows = tuple(tuple(w) for w in self.disconnects)
        object.__setattr__(self, "disconnects", windows)
        last_end = -1.0
        for start, duration in windows:
            if duration < 0:
                raise ValueError("disconnect duration must be >= 0")
            if start < last_end:
                raise ValueError("disconnect windows must be sorted and disjoint")
            last_end = start + duration

    def in_window(self, t_ms: float) -> bool:
        return any(s <= t_ms < s + d for s, d in self.disconnects)

    def window_started_in(self, after_ms: float, until_ms: float) -> Optional[float]:
        """Earliest window start in (after_ms, until_ms], if any."""
        for start, _ in self.disconnects:
            if after_ms < start <= until_ms:
                return start
        return None


class SimConnection:
    """One established tunnel connection; two directed byte pipes."""

    _ids = 0

    def __init__(self, net: "SimNetwork", established_ms: float):
        SimConnection._ids += 1
        self.id = SimConnection._ids
        self.net = net
        self.established_ms = established_ms
        self.dead = False
        self.handlers: dict[str, object] = {}  # side -> ConnectionHandler
        self.busy_until: dict[str, float] = {"duct": established_ms, "bridge": established_ms}

    def endpoint(self, side: str) -> "SimEndpoint":
        return SimEndpoint(self, side)

    def _peer(self, side: str) -> str:
        return "bridge" if side == "duct" else "duct"

    def send(self, side: str, data: bytes, binary: bool) -> None:
        net, clock, profile = self.net, self.net.clock, self.net.profile
        now = clock.now_ms()
        nbytes = len(data)
        net.trace.emit("send", f"conn={self.id} from={side} bytes={nbytes} binary={int(binary)}")
        if self.dead:
            self._fail_sender(side, "connection reset")
            return
        died_at = profile.window_started_in(self.established_ms, now)
        if died_at is not None or profile.in_window(now):
            self.dead = True
            self._fail_sender(side, "link outage")
            return
        if profile.loss_prob > 0 and net.rng.random() < profile.loss_prob:
            self.dead = True
            net.trace.emit("teardown", f"conn={self.id} reason=loss at={side}")
            self._notify_close(side, "stream broke (loss)", immediate=True)
            self._notify_close(self._peer(side), "stream broke (loss)",
                               delay_ms=profile.latency_ms)
            return
        start = max(now, self.busy_until[side])
        tx_ms = (
            nbytes / profile.bandwidth_bytes_per_s * 1000.0
            if profile.bandwidth_bytes_per_s
            else 0.0
        )
        finish = start + tx_ms
        self.busy_until[side] = finish
        jitter = (
            net.rng.uniform(-profile.jitter_ms, profile.jitter_ms)
            if profile.jitter_ms
            else 0.0
        )
        deliver_at = max(finish, finish + profile.latency_ms + jitter)
        clock.call_at(deliver_at, lambda: self._deliver(side, data, binary, deliver_at))

    def _deliver(self, sender: str, data: bytes, binary: bool, at_ms: float) -> None:
        if self.dead:
            return
        died_at = self.net.profile.window_started_in(self.established_ms, at_ms)
        if died_at is not None:
            # stream died under the frame while it was in flight
            self.dead = True
            self.net.trace.emit("teardown", f"conn={self.id} reason=outage_inflight")
            return
        peer = self._peer(sender)
        self.net.trace.emit("deliver", f"conn={self.id} to={peer} bytes={len(data)} binary={int(binary)}")
        handler = self.handlers.get(peer)
        if handler is not None:
            handler.on_frame(data, binary)

    def _fail_sender(self, side: str, reason: str) -> None:
        self.net.trace.emit("teardown", f"conn={self.id} reason=send_failed at={side}")
        self._notify_close(side, reason, immediate=True)

    def _notify_close(self, side: str, reason: str, immediate: bool = False,
                      delay_ms: float = 0.0) -> None:
        handler = self.handlers.pop(side, None)
        if handler is None:
            return
        if immediate:
            self.net.clock.post(lambda: handler.on_close(reason))
        else:
            self.net.clock.call_later(delay_ms, lambda: handler.on_close(reason))

    def close(self, side: str, reason: str = "closed") -> None:
        """Graceful close initiated by one endpoint."""
        if self.handlers.pop(side, None) is None:
            return
        self.net.trace.emit("close", f"conn={self.id} by={side}")
        alive = not self.dead and self.net.profile.window_started_in(
            self.established_ms, self.net.clock.now_ms()
        ) is None
        self.dead = True
        if alive:
            self._notify_close(self._peer(side), f"peer closed: {reason}",
                               delay_ms=self.net.profile.latency_ms)


class SimEndpoint:
    """Connection facade handed to a protocol core; implements send/close."""

    def __init__(self, conn: SimConnection, side: str):
        self._conn = conn
        self.side = side

    def send(self, data: bytes, binary: bool) -> None:
        self._conn.send(self.side, data, binary)

    def close(self, reason: str = "closed") -> None:
        self._conn.close(self.side, reason)


class SimNetwork:
    """The single duct<->bridge link, with the bridge listening on it.

    Implements the same connect() contract as the real websocket
    connector, so the duct core is identical in tests and production.
    """

    def __init__(self, profile: LinkProfile, clock: SimClock, trace: Trace):
        self.profile = profile
        self.clock = clock
        self.trace = trace
        self.rng = random.Random(profile.seed)
        self._acceptor = None
        self.connections: list[SimConnection] = []

    def listen(self, acceptor) -> None:
        """acceptor: handshake(offered, token) -> Encoding (may raise
        HandshakeRefused); attach(conn, encoding) -> ConnectionHandler."""
        self._acceptor = acceptor

    def connect(self, url: str, offered: Sequence[Encoding],
                token: Optional[str], handler) -> None:
        now = self.clock.now_ms()
        latency = self.profile.latency_ms
        self.trace.emit("connect", f"url={url}")

        def server_side() -> None:
            arrive = self.clock.now_ms()
            if self._acceptor is None:
                self._refuse(handler, "connection refused", latency)
                return
            if self.profile.in_window(arrive) or self.profile.window_started_in(now, arrive):
                self.trace.emit("connect_fail", "reason=link outage")
                self.clock.call_later(latency, lambda: handler.on_close("connect failed: link outage"))
                return
            try:
                encoding = self._acceptor.handshake(list(offered), token)
            except HandshakeRefused as refusal:
                self._refuse(handler, refusal.reason, latency)
                return
            conn = SimConnection(self, arrive)
            self.connections.append(conn)
            server_handler = self._acceptor.attach(conn.endpoint("bridge"), encoding)
            conn.handlers["bridge"] = server_handler
            server_handler.on_open(conn.endpoint("bridge"), encoding)
            self.trace.emit("accept", f"conn={conn.id} encoding={encoding.value}")

            def client_side() -> None:
                if conn.dead or self.profile.window_started_in(conn.established_ms,
                                                               self.clock.now_ms()):
                    conn.dead = True
                    handler.on_close("connect failed: link outage")
                    return
                conn.handlers["duct"] = handler
                handler.on_open(conn.endpoint("duct"), encoding)

            self.clock.call_later(latency, client_side)

        if self.profile.in_window(now):
            self.trace.emit("connect_fail", "reason=link outage")
            self.clock.call_later(latency, lambda: handler.on_close("connect failed: link outage"))
            return
        self.clock.call_later(latency, server_side)

    def _refuse(self, handler, reason: str, latency: float) -> None:
        self.trace.emit("refuse", f"reason={reason}")
        self.clock.call_later(latency, lambda: handler.on_close(f"refused: {reason}"))

    def kill_connections(self, silent: bool = False, reason: str = "forced break") -> int:
        """Test/scenario hook: tear down every live connection now."""
        killed = 0
        for conn in self.connections:
            if conn.dead:
                continue
            conn.dead = True
            killed += 1
            self.trace.emit("teardown", f"conn={conn.id} reason=forced")
            if not silent:
                conn._notify_close("duct", reason, immediate=True)
                conn._notify_close("bridge", reason, immediate=True)
        return killed
