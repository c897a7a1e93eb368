"""In-process publish/subscribe broker with a request/response service registry.

Stands in for the robot middleware on both the edge and the cloud side:
application code and the relay endpoints talk to this bus identically
whether the tunnel between them is real or simulated.

Delivery model: per-publisher FIFO into bounded per-subscription queues
with drop-oldest eviction. No replay of past messages to late
subscribers. Service handlers come in two flavors: plain functions
(request -> response, run on a worker thread for blocking callers) and
deferred handlers used by the relay proxies, which receive a respond
callback they may invoke later. Deferred handlers and `call_async` are
the event-world API: they must not block and they complete through the
bus clock, so they behave identically under the simulator.
"""

from __future__ import annotations

import re
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .clock import Clock
from .errors import PubductError
from .values import Value

TOPIC_RE = re.compile(r"^(/[A-Za-z0-9_]+)+$")


class InvalidTopicName(PubductError):
    def __init__(self, name: str):
        super().__init__(f"invalid topic name {name!r}")


class TypeConflict(PubductError):
    def __init__(self, topic: str, existing: str, new: str):
        self.topic, self.existing, self.new = topic, existing, new
        super().__init__(f"topic {topic}: advertised as {existing!r}, got {new!r}")


class HandleClosed(PubductError):
    pass


class DuplicateService(PubductError):
    def __init__(self, name: str):
        super().__init__(f"service {name!r} already registered")


class NoSuchService(PubductError):
    def __init__(self, name: str):
        super().__init__(f"no such service {name!r}")


class CallTimeout(PubductError):
    pass


class HandlerFailure(PubductError):
    pass


def validate_topic_name(name: str) -> str:
    if not isinstance(name, str) or not TOPIC_RE.match(name):
        raise InvalidTopicName(name)
    return name


@dataclass(frozen=True)
class BusMessage:
    topic: str
    type: str
    payload: Value
    seq: int
    timestamp_us: int
    origin: Optional[str] = None  # provenance tag set by relay republishers


@dataclass(frozen=True)
class TopicInfo:
    topic: str
    type: str
    publishers: int
    subscribers: int


@dataclass(frozen=True)
class ServiceInfo:
    name: str
    type: str


class Subscription:
    """Bounded delivery queue; oldest message is evicted when full."""

    def __init__(self, bus: "LocalBus", topic: str, queue_length: int,
                 listener: Optional[Callable[[], None]] = None):
        self._bus = bus
        self.topic = topic
        self.queue_length = queue_length
        self._queue: deque[BusMessage] = deque()
        self._lock = threading.Lock()
        self._ready = threading.Condition(self._lock)
        self._listener = listener
        self.enqueued = 0
        self.dropped = 0
        self.closed = False

    def _deliver(self, message: BusMessage) -> None:
        with self._ready:
            if self.closed:
                return
            if len(self._queue) >= self.queue_length:
                self._queue.popleft()
                self.dropped += 1
            self._queue.append(message)
            self.enqueued += 1
            self._ready.notify()
        if self._listener is not None:
            self._listener()

    def poll(self) -> Optional[BusMessage]:
        with self._lock:
            return self._queue.popleft() if self._queue else None

    def drain(self) -> list[BusMessage]:
        with self._lock:
            items = list(self._queue)
            self._queue.clear()
            return items

    def take(self, timeout_s: Optional[float] = None) -> Optional[BusMessage]:
        """Blocking pop for thread-world consumers; None on timeout/close."""
        with self._ready:
            if not self._queue:
                self._ready.wait(timeout=timeout_s)
            return self._queue.popleft() if self._queue else None

    def __len__(self) -> int:
        with self._lock:
            return len(self._queue)

    def close(self) -> None:
        self._bus.unsubscribe(self)


class PublisherHandle:
    def __init__(self, bus: "LocalBus", topic: str, type: str,
                 origin: Optional[str] = None):
        self._bus = bus
        self.topic = topic
        self.type = type
        self.origin = origin
        self._seq = 0
        self._lock = threading.Lock()
        self.closed = False

    def publish(self, payload: Value) -> int:
        return self._bus._publish(self, payload)

    def close(self) -> None:
        self._bus.unadvertise(self)


@dataclass
class _Service:
    name: str
    type: str
    begin: Callable  # (args, respond) -> None; respond(ok: bool, payload: Value)
    sync_handler: Optional[Callable] = None


class ServiceHandle:
    def __init__(self, bus: "LocalBus", name: str):
        self._bus = bus
        self.name = name
        self.closed = False

    def close(self) -> None:
        self._bus.unregister_service(self)


class _TopicState:
    __slots__ = ("type", "publishers", "subscriptions")

    def __init__(self, type: str):
        self.type = type
        self.publishers: set[PublisherHandle] = set()
        self.subscriptions: set[Subscription] = set()


class LocalBus:
    def __init__(self, clock: Clock):
        self.clock = clock
        self._lock = threading.RLock()
        self._topics: dict[str, _TopicState] = {}
        self._services: dict[str, _Service] = {}

    # --- topics ---

    def advertise(self, topic: str, type: str,
                  origin: Optional[str] = None) -> PublisherHandle:
        validate_topic_name(topic)
        with self._lock:
            state = self._topics.get(topic)
            if state is None:
                state = self._topics[topic] = _TopicState(type)
            elif state.publishers and state.type != type:
                raise TypeConflict(topic, state.type, type)
            elif not state.publishers:
                state.type = type
            handle = PublisherHandle(self, topic, type, origin)
            state.publishers.add(handle)
            return handle

    def unadvertise(self, handle: PublisherHandle) -> None:
        with self._lock:
            if handle.closed:
                return
            handle.closed = True
            state = self._topics.get(handle.topic)
            if state is not None:
                state.publishers.discard(handle)
                self._gc_topic(handle.topic, state)

    def _publish(self, handle: PublisherHandle, payload: Value) -> int:
        with handle._lock:
            if handle.closed:
                raise HandleClosed(f"publisher for {handle.topic} is closed")
            seq = handle._seq
            handle._seq += 1
            message = BusMessage(
                topic=handle.topic,
                type=handle.type,
                payload=payload,
                seq=seq,
                timestamp_us=int(self.clock.now_ms() * 1000),
                origin=handle.origin,
            )
        with self._lock:
            state = self._topics.get(handle.topic)
            targets = list(state.subscriptions) if state else []
        for sub in targets:
            sub._deliver(message)
        return seq

    def subscribe(self, topic: str, queue_length: int = 16,
                  listener: Optional[Callable[[], None]] = None) -> Subscription:
        validate_topic_name(topic)
        if queue_length < 1:
            raise ValueError("queue_length must be >= 1")
        with self._lock:
            state = self._topics.get(topic)
            if state is None:
                state = self._topics[topic] = _TopicState("")
            sub = Subscription(self, topic, queue_length, listener)
            state.subscriptions.add(sub)
            return sub

    def unsubscribe(self, subscription: Subscription) -> None:
        with self._lock:
            if subscription.closed:
                return
            subscription.closed = True
            state = self._topics.get(subscription.topic)
            if state is not None:
                state.subscriptions.discard(subscription)
                self._gc_topic(subscription.topic, state)

    def _gc_topic(self, topic: str, state: _TopicState) -> None:
        if not state.publishers and not state.subscriptions:
            self._topics.pop(topic, None)

    # --- services ---

    def register_service(self, name: str, type: str,
                         handler: Callable[[Value], Value]) -> ServiceHandle:
        """Register a plain request->response handler (may block; runs on a
        worker thread for synchronous callers, inline for call_async)."""

        def begin(args: Value, respond: Callable[[bool, Value], None]) -> None:
            try:
                respond(True, handler(args))
            except Exception as exc:
                respond(False, f"{exc.__class__.__name__}: {exc}")

        return self._register(name, type, begin, sync_handler=handler)

    def register_service_deferred(self, name: str, type: str,
                                  begin: Callable) -> ServiceHandle:
        """Register a non-blocking handler begin(args, respond); respond may be
        invoked later, from any context."""
        return self._register(name, type, begin, sync_handler=None)

    def _register(self, name: str, type: str, begin: Callable,
                  sync_handler: Optional[Callable]) -> ServiceHandle:
        validate_topic_name(name)
        with self._lock:
            if name in self._services:
                raise DuplicateService(name)
            self._services[name] = _Service(name, type, begin, sync_handler)
            return ServiceHandle(self, name)

    def unregister_service(self, handle: ServiceHandle) -> None:
        with self._lock:
            if handle.closed:
                return
            handle.closed = True
            self._services.pop(handle.name, None)

    def call(self, name: str, args: Value, timeout_s: float = 10.0) -> Value:
        """Blocking call for thread-world callers."""
        with self._lock:
            service = self._services.get(name)
        if service is None:
            raise NoSuchService(name)
        done = threading.Event()
        box: list = []

        def respond(ok: bool, payload: Value) -> None:
            if not box:
                box.append((ok, payload))
                done.set()

        if service.sync_handler is not None:
            handler = service.sync_handler

            def run() -> None:
                try:
                    respond(True, handler(args))
                except Exception as exc:
                    respond(False, f"{exc.__class__.__name__}: {exc}")

            threading.Thread(target=run, daemon=True,
                             name=f"pubduct-call{name}").start()
        else:
            service.begin(args, respond)
        if not done.wait(timeout=timeout_s):
            raise CallTimeout(f"call to {name} timed out after {timeout_s}s")
        ok, payload = box[0]
        if not ok:
            raise HandlerFailure(str(payload))
        return payload

    def call_async(self, name: str, args: Value, timeout_ms: float,
                   done: Callable[[bool, Value], None]) -> None:
        """Event-world call: done(ok, payload) runs on the bus clock exactly
        once; payload carries the error text when ok is False."""
        with self._lock:
            service = self._services.get(name)
        if service is None:
            self.clock.post(lambda: done(False, f"no such service {name!r}"))
            return
        finished = [False]
        timer: list = [None]

        def respond(ok: bool, payload: Value) -> None:
            if finished[0]:
                return
            finished[0] = True
            if timer[0] is not None:
                timer[0].cancel()
            self.clock.post(lambda: done(ok, payload))

        if service.sync_handler is None:
            timer[0] = self.clock.call_later(
                timeout_ms, lambda: respond(False, f"call to {name} timed out")
            )
        service.begin(args, respond)

    # --- inspection ---

    def topics(self) -> list[TopicInfo]:
        with self._lock:
            return [
                TopicInfo(topic, state.type, len(state.publishers),
                          len(state.subscriptions))
                for topic, state in sorted(self._topics.items())
            ]

    def services(self) -> list[ServiceInfo]:
        with self._lock:
            return [ServiceInfo(s.name, s.type)
                    for s in sorted(self._services.values(), key=lambda s: s.name)]
