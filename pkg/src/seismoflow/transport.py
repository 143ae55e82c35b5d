"""Pub-sub and HTTP plumbing.

The in-memory broker carries all desk-scale traffic (tests, CLI runs,
the simulator); it implements exactly the filter/deliver semantics the
platform needs — no retained messages, no persistent sessions. A real
MQTT 3.1.1 broker is reached through ``seismoflow.mqtt_adapter`` instead.
"""

from __future__ import annotations

import itertools
import json
import os
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Iterable

from .clock import Clock, RealClock
from .errors import BadFilter, Disconnected, MalformedFeed, NetworkError
from .quakes import EarthquakeEvent

DEFAULT_BODY_CAP = 256 * 1024

ENV_BROKER_URL = "SEISMOFLOW_BROKER_URL"
ENV_BROKER_USERNAME = "SEISMOFLOW_BROKER_USERNAME"
ENV_BROKER_PASSWORD = "SEISMOFLOW_BROKER_PASSWORD"
ENV_QOS = "SEISMOFLOW_QOS"
ENV_TLS = "SEISMOFLOW_TLS"
ENV_FEED_URL = "SEISMOFLOW_FEED_URL"


@dataclass(frozen=True)
class BrokerProfile:
    """Deployment-level broker connection settings.

    These values live strictly in environment/deployment config; they are
    never written into flow documents (the serializer tests scan for
    leaks).
    """

    url: str
    username: str | None = None
    password: str | None = None
    qos: int = 1
    use_tls: bool = False

    def __post_init__(self):
        if self.qos not in (0, 1, 2):
            raise ValueError(f"qos must be 0, 1 or 2, got {self.qos}")

    @classmethod
    def from_env(cls, env: "dict[str, str] | None" = None) -> "BrokerProfile | None":
        """Profile from SEISMOFLOW_* variables; None when no URL is set."""
        env = os.environ if env is None else env
        url = env.get(ENV_BROKER_URL, "")
        if not url:
            return None
        return cls(
            url=url,
            username=env.get(ENV_BROKER_USERNAME) or None,
            password=env.get(ENV_BROKER_PASSWORD) or None,
            qos=int(env.get(ENV_QOS, "1")),
            use_tls=env.get(ENV_TLS, "false").strip().lower() == "true",
        )


@dataclass(frozen=True)
class BrokerMessage:
    topic: str
    body: bytes
    received_at_ms: int


def validate_filter(topic_filter: str) -> None:
    """Reject malformed subscription filters (BadFilter).

    Filters are `/`-separated levels; `+` matches one whole level, `#`
    matches all remaining levels and may only be the final level.
    """
    if not topic_filter:
        raise BadFilter("empty topic filter")
    levels = topic_filter.split("/")
    for i, level in enumerate(levels):
        if "#" in level:
            if level != "#":
                raise BadFilter(f"'#' must occupy a whole level: {topic_filter!r}")
            if i != len(levels) - 1:
                raise BadFilter(f"'#' must be the final level: {topic_filter!r}")
        if "+" in level and level != "+":
            raise BadFilter(f"'+' must occupy a whole level: {topic_filter!r}")


def validate_topic(topic: str) -> None:
    """Publish topics are concrete: non-empty and wildcard-free."""
    if not topic:
        raise BadFilter("empty topic")
    if "#" in topic or "+" in topic:
        raise BadFilter(f"publish topic must not contain wildcards: {topic!r}")


def topic_matches(topic_filter: str, topic: str) -> bool:
    """Standard MQTT filter matching; `a/#` also matches the parent `a`."""
    filter_levels = topic_filter.split("/")
    topic_levels = topic.split("/")
    for i, pattern in enumerate(filter_levels):
        if pattern == "#":
            return True
        if i >= len(topic_levels):
            return False
        if pattern == "+":
            continue
        if pattern != topic_levels[i]:
            return False
    return len(filter_levels) == len(topic_levels)


class Subscription:
    """Token returned by subscribe(); also usable for bookkeeping."""

    __slots__ = ("token", "topic_filter", "callback", "active")

    def __init__(self, token: int, topic_filter: str,
                 callback: Callable[[BrokerMessage], None]):
        self.token = token
        self.topic_filter = topic_filter
        self.callback = callback
        self.active = True


class InMemoryBroker:
    """Exactly-once, in-process pub-sub with MQTT filter semantics.

    Callbacks run synchronously on the publisher's thread while the
    broker lock is held, so per-topic delivery order equals publish
    order; per the platform contract callbacks must only enqueue work.
    """

    def __init__(self, clock: "Clock | None" = None, body_cap: int = DEFAULT_BODY_CAP):
        self._clock = clock or RealClock()
        self._body_cap = body_cap
        self._subs: dict[int, Subscription] = {}
        self._tokens = itertools.count(1)
        self._lock = threading.RLock()
        self._closed = False

    def subscribe(self, topic_filter: str,
                  callback: Callable[[BrokerMessage], None]) -> Subscription:
        validate_filter(topic_filter)
        with self._lock:
            if self._closed:
                raise Disconnected("broker is closed")
            sub = Subscription(next(self._tokens), topic_filter, callback)
            self._subs[sub.token] = sub
            return sub

    def unsubscribe(self, subscription: Subscription) -> None:
        with self._lock:
            self._subs.pop(subscription.token, None)
            subscription.active = False

    def publish(self, topic: str, body: "bytes | str") -> int:
        """Deliver to every matching subscriber; returns the delivery count."""
        validate_topic(topic)
        if isinstance(body, str):
            body = body.encode("utf-8")
        if len(body) > self._body_cap:
            raise ValueError(f"body of {len(body)} bytes exceeds cap {self._body_cap}")
        with self._lock:
            if self._closed:
                raise Disconnected("broker is closed")
            message = BrokerMessage(topic=topic, body=body,
                                    received_at_ms=self._clock.now_ms())
            targets = [s for s in self._subs.values()
                       if topic_matches(s.topic_filter, topic)]
            for sub in targets:
                sub.callback(message)
        return len(targets)

    def subscription_count(self) -> int:
        with self._lock:
            return len(self._subs)

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._subs.clear()


def parse_feed_document(body: str) -> list[EarthquakeEvent]:
    """Feed wire format: a JSON array of event objects."""
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedFeed(f"feed body is not JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise MalformedFeed("feed body must be a JSON array")
    events = []
    for raw in doc:
        if not isinstance(raw, dict):
            raise MalformedFeed(f"feed entry must be an object, got {raw!r}")
        try:
            events.append(EarthquakeEvent(
                event_id=str(raw["id"]),
                magnitude=float(raw["magnitude"]),
                latitude=float(raw["lat"]),
                longitude=float(raw["lon"]),
                origin_time_ms=int(raw["originTimeMs"]),
                source=raw.get("source", "official-feed"),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFeed(f"bad feed entry {raw!r}: {exc}") from exc
    return events


def poll_feed(
    endpoint_url: str,
    last_seen: Iterable[str],
    timeout_s: float = 5.0,
) -> tuple[list[EarthquakeEvent], set[str]]:
    """Fetch the feed once; return unseen events and the grown seen-set."""
    last_seen = set(last_seen)
    try:
        with urllib.request.urlopen(endpoint_url, timeout=timeout_s) as response:
            body = response.read().decode("utf-8")
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise NetworkError(f"feed poll failed: {exc}") from exc
    events = parse_feed_document(body)
    fresh = [e for e in events if e.event_id not in last_seen]
    return fresh, last_seen | {e.event_id for e in events}
