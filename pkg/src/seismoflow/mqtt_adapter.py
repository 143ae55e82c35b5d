"""Adapter for a real external MQTT 3.1.1 broker.

Presents the same subscribe/publish surface as the in-memory broker so
the engine does not care which one it talks to. Backed by paho-mqtt
(install the ``seismoflow[mqtt]`` extra); reconnects with exponential
backoff from 1 s to 60 s and resubscribes every active filter after a
reconnect, so long-lived flows survive broker restarts.

Delivery guarantees follow the configured QoS level, unlike the
in-memory broker's exactly-once-by-construction.
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable

from .clock import Clock, RealClock
from .errors import Disconnected
from .transport import (
    BrokerMessage,
    BrokerProfile,
    Subscription,
    topic_matches,
    validate_filter,
    validate_topic,
)

RECONNECT_MIN_S = 1
RECONNECT_MAX_S = 60


def _paho_client():
    try:
        import paho.mqtt.client as mqtt
    except ImportError as exc:  # pragma: no cover - depends on extra
        raise ImportError(
            "external broker support needs paho-mqtt; "
            "install seismoflow[mqtt]") from exc
    return mqtt.Client(protocol=mqtt.MQTTv311)


class ExternalBroker:
    """MQTT client handle with the platform's broker surface.

    A client_factory can stand in for paho in tests; the factory must
    return an object with the paho-mqtt v1 Client API.
    """

    def __init__(
        self,
        profile: BrokerProfile,
        clock: "Clock | None" = None,
        client_factory: "Callable[[], object] | None" = None,
    ):
        self._profile = profile
        self._clock = clock or RealClock()
        self._subs: dict[int, Subscription] = {}
        self._tokens = itertools.count(1)
        self._lock = threading.RLock()
        self._connected = False
        self._closed = False

        self._client = (client_factory or _paho_client)()
        if profile.username:
            self._client.username_pw_set(profile.username, profile.password)
        if profile.use_tls:
            self._client.tls_set()
        self._client.reconnect_delay_set(min_delay=RECONNECT_MIN_S,
                                         max_delay=RECONNECT_MAX_S)
        self._client.on_connect = self._on_connect
        self._client.on_disconnect = self._on_disconnect
        self._client.on_message = self._on_message

    def connect(self) -> None:
        host, port = self._endpoint()
        self._client.connect(host, port)
        self._client.loop_start()

    def _endpoint(self) -> tuple[str, int]:
        url = self._profile.url
        for scheme in ("mqtt://", "tcp://", "mqtts://", "ssl://"):
            if url.startswith(scheme):
                url = url[len(scheme):]
                break
        default = 8883 if self._profile.use_tls else 1883
        if ":" in url:
            host, _, port_text = url.partition(":")
            return host, int(port_text)
        return url, default

    # paho callbacks (fire on the network thread; they only enqueue/refire)

    def _on_connect(self, client, userdata, flags, rc):
        with self._lock:
            self._connected = True
            filters = [s.topic_filter for s in self._subs.values()]
        for topic_filter in filters:  # clean-session broker forgot these
            client.subscribe(topic_filter, qos=self._profile.qos)

    def _on_disconnect(self, client, userdata, rc):
        with self._lock:
            self._connected = False

    def _on_message(self, client, userdata, mqtt_message):
        message = BrokerMessage(topic=mqtt_message.topic,
                                body=bytes(mqtt_message.payload),
                                received_at_ms=self._clock.now_ms())
        with self._lock:
            targets = [s for s in self._subs.values()
                       if topic_matches(s.topic_filter, message.topic)]
        for sub in targets:
            sub.callback(message)

    # broker surface

    def subscribe(self, topic_filter: str,
                  callback: Callable[[BrokerMessage], None]) -> Subscription:
        validate_filter(topic_filter)
        with self._lock:
            if self._closed:
                raise Disconnected("adapter is closed")
            sub = Subscription(next(self._tokens), topic_filter, callback)
            self._subs[sub.token] = sub
        self._client.subscribe(topic_filter, qos=self._profile.qos)
        return sub

    def unsubscribe(self, subscription: Subscription) -> None:
        with self._lock:
            self._subs.pop(subscription.token, None)
            subscription.active = False
            still_used = any(s.topic_filter == subscription.topic_filter
                             for s in self._subs.values())
        if not still_used:
            self._client.unsubscribe(subscription.topic_filter)

    def publish(self, topic: str, body: "bytes | str") -> int:
        validate_topic(topic)
        with self._lock:
            if self._closed:
                raise Disconnected("adapter is closed")
            if not self._connected:
                raise Disconnected(f"not connected to {self._profile.url}")
        if isinstance(body, str):
            body = body.encode("utf-8")
        self._client.publish(topic, body, qos=self._profile.qos)
        return 1

    def subscription_count(self) -> int:
        with self._lock:
            return len(self._subs)

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._subs.clear()
        self._client.loop_stop()
        self._client.disconnect()
