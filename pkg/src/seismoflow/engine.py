"""Event-driven runtime: deploys flow graphs and routes messages.

Each deployment owns one logical serial event queue. Node handlers never
run concurrently with themselves; transport callbacks and timers only
enqueue work. The control surface (deploy / inject / stop) may be called
from any thread — calls funnel through the queue, and whichever thread
finds the queue idle drains it.

Every produced message fans out exactly once per wire leaving its output
port; delivered copies are independent (payload deep-copied, hop count
incremented, id suffixed per wire). A hop limit turns accidental cycles
into diagnostics instead of infinite loops.
"""

from __future__ import annotations

import copy
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .clock import Clock, RealClock, TimerHandle
from .errors import DeployError, NotDeployed, UnknownNode
from .model import FlowGraph, Message, validate_flow
from .palette import NodeBehavior, Palette
from .registry import SensorRegistry
from .transport import InMemoryBroker, Subscription, poll_feed
from .errors import NetworkError, MalformedFeed
from .quakes import EarthquakeEvent

DEFAULT_HOP_LIMIT = 1024
DEFAULT_DRAIN_TIMEOUT_S = 5.0
DEFAULT_FEED_POLL_MS = 5000

FEED_NODE_ID = "@feed"  # attribution for deployment-level feed diagnostics


@dataclass(frozen=True)
class RouteRecord:
    """One per (produced message, wire); the delivery-audit surface."""

    message_id: str
    from_node: str
    to_node: str
    enqueue_timestamp_ms: int

    def audit_line(self) -> str:
        return (f"{self.enqueue_timestamp_ms}\t{self.message_id}\t"
                f"{self.from_node}\t{self.to_node}")


@dataclass(frozen=True)
class DebugEvent:
    """Entry of the live debug stream: debug node feeds, diagnostics,
    notify confirmations."""

    kind: str  # "debug" | "diagnostic" | "notify"
    node_id: str
    timestamp_ms: int
    message_id: str | None = None
    payload: Any = None
    meta: dict[str, str] = field(default_factory=dict)
    text: str | None = None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "nodeId": self.node_id,
            "timestampMs": self.timestamp_ms,
            "messageId": self.message_id,
            "payload": self.payload,
            "meta": dict(self.meta),
            "text": self.text,
        }


class _PeriodicTimer:
    """One-shot timers chained into a periodic one; cancellable between fires."""

    def __init__(self, clock: Clock, interval_ms: int, fire: Callable[[], None]):
        self._clock = clock
        self._interval_ms = interval_ms
        self._fire = fire
        self._cancelled = False
        self._handle: TimerHandle | None = None

    def start(self, first_delay_ms: "int | None" = None) -> None:
        delay = self._interval_ms if first_delay_ms is None else first_delay_ms
        self._handle = self._clock.schedule(delay, self._tick)

    def _tick(self) -> None:
        if self._cancelled:
            return
        self._handle = self._clock.schedule(self._interval_ms, self._tick)
        self._fire()

    def cancel(self) -> None:
        self._cancelled = True
        if self._handle is not None:
            self._handle.cancel()


class NodeContext:
    """Per-node runtime services handed to behaviors.

    All callbacks registered here (subscription handlers, timer
    functions, quake listeners) are invoked on the deployment's serial
    event loop.
    """

    def __init__(self, deployment: "Deployment", node_id: str, config: dict[str, Any]):
        self._deployment = deployment
        self.node_id = node_id
        self.config = config
        self._current: Message | None = None

    @property
    def clock(self) -> Clock:
        return self._deployment.clock

    @property
    def registry(self) -> SensorRegistry:
        return self._deployment.registry

    def emit(self, payload: Any, *, port: int = 0,
             meta: "dict[str, str] | None" = None) -> Message:
        """Produce a message on an output port and route it to all wires.

        The message inherits the hop lineage of the message currently
        being handled, so loops are bounded across node-produced hops.
        """
        hops = self._current.hop_count if self._current is not None else 0
        message = self._deployment._new_message(
            payload=payload, source_node=self.node_id, hop_count=hops,
            meta=meta or {})
        self._deployment.route_fanout(self.node_id, port, message)
        return message

    def debug(self, message: Message) -> None:
        self._deployment._emit_debug_event(DebugEvent(
            kind="debug", node_id=self.node_id,
            timestamp_ms=self.clock.now_ms(), message_id=message.id,
            payload=copy.deepcopy(message.payload), meta=dict(message.meta)))

    def diagnostic(self, text: str, message: "Message | None" = None) -> None:
        self._deployment._emit_debug_event(DebugEvent(
            kind="diagnostic", node_id=self.node_id,
            timestamp_ms=self.clock.now_ms(),
            message_id=message.id if message else None, text=text))

    def notify_confirmation(self, text: str, message: "Message | None" = None) -> None:
        self._deployment._emit_debug_event(DebugEvent(
            kind="notify", node_id=self.node_id,
            timestamp_ms=self.clock.now_ms(),
            message_id=message.id if message else None, text=text))

    def subscribe(self, topic_filter: str,
                  handler: Callable[..., None]) -> None:
        """Subscribe on the broker; handler(broker_message) runs on the loop."""
        self._deployment._subscribe(self.node_id, topic_filter, handler)

    def schedule(self, delay_ms: int, fn: Callable[[], None]) -> None:
        """Run fn once on the loop after delay_ms."""
        dep = self._deployment
        handle = dep.clock.schedule(
            delay_ms, lambda: dep._submit(lambda: dep._run_guarded(self.node_id, fn)))
        dep._timers.append(handle)

    def schedule_periodic(self, interval_ms: int, fn: Callable[[], None],
                          first_delay_ms: "int | None" = None) -> None:
        """Run fn on the loop every interval_ms until the deployment stops."""
        dep = self._deployment
        timer = _PeriodicTimer(
            dep.clock, interval_ms,
            lambda: dep._submit(lambda: dep._run_guarded(self.node_id, fn)))
        timer.start(first_delay_ms)
        dep._timers.append(timer)

    def quake_listener(self, fn: Callable[[EarthquakeEvent], None]) -> None:
        """Receive the deployment's deduplicated earthquake-event stream."""
        self._deployment._add_quake_listener(self.node_id, fn)

    @property
    def feed_url(self) -> "str | None":
        return self._deployment.feed_url


class Deployment:
    """A running flow: instantiated behaviors plus the serial event loop."""

    def __init__(self, engine: "Engine", graph: FlowGraph):
        self._engine = engine
        self.graph = graph
        self.flow_id = graph.id
        self.state = "Deployed"
        self.clock = engine.clock
        self.registry = engine.registry
        self.feed_url = engine.feed_url
        self.subscriptions: set[tuple[str, str]] = set()
        self.route_records: list[RouteRecord] = []
        self.on_delivery: "Callable[[str, Message], None] | None" = None

        self._broker = engine.broker
        self._hop_limit = engine.hop_limit
        self._audit = engine.audit
        self._queue: deque[Callable[[], None]] = deque()
        self._lock = threading.Lock()
        self._pumping = False
        self._paused = False
        self._msg_counter = 0
        self._broker_subs: list[Subscription] = []
        self._timers: list[Any] = []
        self._debug_events: list[DebugEvent] = []
        self._debug_listeners: list[Callable[[DebugEvent], None]] = list(
            engine._debug_listeners)

        self._wires_by_port: dict[tuple[str, int], list[str]] = {}
        for wire in graph.wires:
            self._wires_by_port.setdefault(
                (wire.from_node, wire.from_port), []).append(wire.to_node)

        self._contexts: dict[str, NodeContext] = {}
        self._behaviors: dict[str, NodeBehavior] = {}

        self._quake_listeners: list[Callable[[EarthquakeEvent], None]] = []
        self._quake_seen: set[str] = set()
        self._quake_poller: _PeriodicTimer | None = None

    # -- lifecycle -------------------------------------------------------

    def _start_nodes(self, palette: Palette) -> None:
        for spec in self.graph.nodes:
            descriptor = palette.get(spec.type)
            assert descriptor is not None  # deploy validated first
            ctx = NodeContext(self, spec.id, descriptor.effective_config(spec.config))
            self._contexts[spec.id] = ctx
            self._behaviors[spec.id] = descriptor.behavior()
        for spec in self.graph.nodes:
            try:
                self._behaviors[spec.id].start(self._contexts[spec.id])
            except Exception as exc:
                self._teardown()
                self.state = "Stopped"
                raise DeployError(spec.id, str(exc)) from exc
        self._pump_if_idle()

    def stop(self, drain_timeout_s: float = DEFAULT_DRAIN_TIMEOUT_S) -> None:
        """Cancel subscriptions, drain queued work (bounded), stop behaviors.

        Idempotent: stopping a stopped deployment is a no-op.
        """
        if self.state == "Stopped":
            return
        self._teardown()
        self._drain(drain_timeout_s)
        for node_id, behavior in self._behaviors.items():
            try:
                behavior.stop(self._contexts[node_id])
            except Exception as exc:  # teardown must not explode
                self._emit_debug_event(DebugEvent(
                    kind="diagnostic", node_id=node_id,
                    timestamp_ms=self.clock.now_ms(),
                    text=f"error during stop: {exc}"))
        self.state = "Stopped"
        self._engine._forget(self)

    def _teardown(self) -> None:
        for sub in self._broker_subs:
            self._broker.unsubscribe(sub)
        self._broker_subs.clear()
        self.subscriptions.clear()
        for timer in self._timers:
            timer.cancel()
        self._timers.clear()
        if self._quake_poller is not None:
            self._quake_poller.cancel()
            self._quake_poller = None

    def _drain(self, timeout_s: float) -> None:
        deadline = time.monotonic() + timeout_s
        with self._lock:
            self._paused = False
        while time.monotonic() < deadline:
            with self._lock:
                if not self._queue:
                    return
                work = self._queue.popleft()
            work()
        with self._lock:
            self._queue.clear()  # drain window over: discard the rest

    # -- event loop ------------------------------------------------------

    def _enqueue(self, work: Callable[[], None]) -> None:
        with self._lock:
            self._queue.append(work)

    def _submit(self, work: Callable[[], None]) -> None:
        """Enqueue work and drain the queue unless someone already is."""
        self._enqueue(work)
        self._pump_if_idle()

    def _pump_if_idle(self) -> None:
        with self._lock:
            if self._pumping or self._paused:
                return
            self._pumping = True
        try:
            while True:
                with self._lock:
                    if not self._queue:
                        return
                    work = self._queue.popleft()
                work()
        finally:
            with self._lock:
                self._pumping = False

    def _run_guarded(self, node_id: str, fn: Callable[[], None]) -> None:
        try:
            fn()
        except Exception as exc:  # contain handler errors; deployment stays live
            self._emit_debug_event(DebugEvent(
                kind="diagnostic", node_id=node_id,
                timestamp_ms=self.clock.now_ms(), text=f"handler error: {exc}"))

    # -- messaging -------------------------------------------------------

    def _new_message(self, payload: Any, source_node: str, hop_count: int,
                     meta: dict[str, str]) -> Message:
        self._msg_counter += 1
        return Message(id=f"m{self._msg_counter}", payload=payload,
                       source_node=source_node,
                       timestamp_ms=self.clock.now_ms(),
                       hop_count=hop_count, meta=meta)

    def inject(self, node_id: str, message: "Message | None" = None, *,
               payload: Any = None, meta: "dict[str, str] | None" = None) -> str:
        """Enqueue a message for a node's handler; ack on enqueue.

        Returns the message id. Propagation may still be in progress when
        this returns.
        """
        if self.state != "Deployed":
            raise NotDeployed(f"flow {self.flow_id!r} is not deployed")
        if not self.graph.has_node(node_id):
            raise UnknownNode(node_id)
        if message is None:
            message = self._new_message(
                payload={} if payload is None else payload,
                source_node=node_id, hop_count=0, meta=meta or {})
        self._submit(lambda: self._deliver(node_id, message))
        return message.id

    def route_fanout(self, produced_by: str, port: int,
                     message: Message) -> list[RouteRecord]:
        """Deliver one copy of message per wire leaving (produced_by, port).

        Copies carry hop_count + 1 and the produced id with a per-wire
        suffix. Messages at the hop limit are dropped with a LoopLimit
        diagnostic instead of fanning out.
        """
        if message.hop_count >= self._hop_limit:
            self._emit_debug_event(DebugEvent(
                kind="diagnostic", node_id=produced_by,
                timestamp_ms=self.clock.now_ms(), message_id=message.id,
                text=f"LoopLimit: hop count {message.hop_count} reached the "
                     f"limit of {self._hop_limit}; message dropped"))
            return []
        records = []
        targets = self._wires_by_port.get((produced_by, port), [])
        now = self.clock.now_ms()
        for index, to_node in enumerate(targets):
            record = RouteRecord(message_id=message.id, from_node=produced_by,
                                 to_node=to_node, enqueue_timestamp_ms=now)
            self.route_records.append(record)
            if self._audit is not None:
                self._audit(record)
            delivered = Message(
                id=f"{message.id}.{index}",
                payload=copy.deepcopy(message.payload),
                source_node=produced_by,
                timestamp_ms=message.timestamp_ms,
                hop_count=message.hop_count + 1,
                meta=dict(message.meta))
            records.append(record)
            self._enqueue(lambda n=to_node, m=delivered: self._deliver(n, m))
        return records

    def _deliver(self, node_id: str, message: Message) -> None:
        if self.on_delivery is not None:
            self.on_delivery(node_id, message)
        ctx = self._contexts[node_id]
        ctx._current = message
        try:
            self._behaviors[node_id].on_message(ctx, message)
        except Exception as exc:
            self._emit_debug_event(DebugEvent(
                kind="diagnostic", node_id=node_id,
                timestamp_ms=self.clock.now_ms(), message_id=message.id,
                text=f"handler error: {exc}"))
        finally:
            ctx._current = None

    # -- debug stream ----------------------------------------------------

    def debug_events(self) -> list[DebugEvent]:
        return list(self._debug_events)

    def add_debug_listener(self, listener: Callable[[DebugEvent], None]) -> None:
        self._debug_listeners.append(listener)

    def _emit_debug_event(self, event: DebugEvent) -> None:
        self._debug_events.append(event)
        for listener in self._debug_listeners:
            listener(event)

    # -- transport bridging -----------------------------------------------

    def _subscribe(self, node_id: str, topic_filter: str,
                   handler: Callable[..., None]) -> None:
        def on_broker_message(broker_message):
            self._submit(
                lambda: self._run_guarded(node_id, lambda: handler(broker_message)))

        sub = self._broker.subscribe(topic_filter, on_broker_message)
        self._broker_subs.append(sub)
        self.subscriptions.add((topic_filter, node_id))

    # -- shared earthquake-event stream ------------------------------------

    def _add_quake_listener(self, node_id: str,
                            fn: Callable[[EarthquakeEvent], None]) -> None:
        if self.feed_url is None:
            raise ValueError(
                "earthquake feed endpoint not configured (SEISMOFLOW_FEED_URL)")
        self._quake_listeners.append(fn)
        if self._quake_poller is None:
            self._quake_poller = _PeriodicTimer(
                self.clock, self._engine.feed_poll_ms,
                lambda: self._submit(self._poll_quakes))
            self._quake_poller.start(first_delay_ms=0)

    def _poll_quakes(self) -> None:
        try:
            fresh, self._quake_seen = poll_feed(self.feed_url, self._quake_seen)
        except (NetworkError, MalformedFeed) as exc:
            self._emit_debug_event(DebugEvent(
                kind="diagnostic", node_id=FEED_NODE_ID,
                timestamp_ms=self.clock.now_ms(), text=str(exc)))
            return
        for event in fresh:
            for listener in self._quake_listeners:
                self._run_guarded(FEED_NODE_ID, lambda e=event, f=listener: f(e))


class Engine:
    """Owns deployments; one live deployment per flow id.

    Redeploying a flow id replaces the previous deployment atomically:
    old subscriptions are cancelled before new ones activate.
    """

    def __init__(
        self,
        broker: InMemoryBroker,
        palette: Palette,
        registry: "SensorRegistry | None" = None,
        clock: "Clock | None" = None,
        *,
        hop_limit: int = DEFAULT_HOP_LIMIT,
        feed_url: "str | None" = None,
        feed_poll_ms: int = DEFAULT_FEED_POLL_MS,
        audit: "Callable[[RouteRecord], None] | None" = None,
    ):
        self.broker = broker
        self.palette = palette
        self.registry = registry or SensorRegistry()
        self.clock = clock or RealClock()
        self.hop_limit = hop_limit
        self.feed_url = feed_url
        self.feed_poll_ms = feed_poll_ms
        self.audit = audit
        self._live: dict[str, Deployment] = {}
        self._debug_listeners: list[Callable[[DebugEvent], None]] = []
        self._lock = threading.Lock()

    def deploy(self, graph: FlowGraph) -> Deployment:
        """Validate, replace any live deployment of this flow id, start nodes."""
        issues = validate_flow(graph, self.palette)
        errors = [i for i in issues if i.severity == "error"]
        if errors:
            first = errors[0]
            raise DeployError(first.node_id, f"validation failed: {first.message}")
        with self._lock:
            previous = self._live.pop(graph.id, None)
        if previous is not None:
            previous.stop()
        deployment = Deployment(self, graph)
        deployment._start_nodes(self.palette)
        with self._lock:
            self._live[graph.id] = deployment
        return deployment

    def stop(self, flow_id: str,
             drain_timeout_s: float = DEFAULT_DRAIN_TIMEOUT_S) -> None:
        deployment = self.get(flow_id)
        if deployment is not None:
            deployment.stop(drain_timeout_s)

    def stop_all(self) -> None:
        for deployment in self.deployments():
            deployment.stop()

    def get(self, flow_id: str) -> "Deployment | None":
        with self._lock:
            return self._live.get(flow_id)

    def deployments(self) -> list[Deployment]:
        with self._lock:
            return list(self._live.values())

    def add_debug_listener(self, listener: Callable[[DebugEvent], None]) -> None:
        """Receive debug events from every current and future deployment."""
        self._debug_listeners.append(listener)
        for deployment in self.deployments():
            deployment.add_debug_listener(listener)

    def _forget(self, deployment: Deployment) -> None:
        with self._lock:
            if self._live.get(deployment.flow_id) is deployment:
                del self._live[deployment.flow_id]


def inject(deployment: Deployment, node_id: str,
           message: "Message | None" = None, **kwargs: Any) -> str:
    """Module-level alias of Deployment.inject."""
    return deployment.inject(node_id, message, **kwargs)


def debug_events(deployment: Deployment) -> list[DebugEvent]:
    """Module-level alias of Deployment.debug_events."""
    return deployment.debug_events()
