"""Domain-abstraction nodes: sensors and earthquakes by name.

Users configure these nodes with domain vocabulary only (a sensor name,
a magnitude). Which device that is, which pub-sub channel it speaks on,
and how the connection is made are resolved here and in the transport
layer, never surfaced in a config dialog. hidden_config_check() is the
standing guard for that property.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

from .palette import FieldSpec, NodeBehavior, NodeTypeDescriptor, Palette
from .quakes import EarthquakeEvent, haversine_km, is_perceptible
from .registry import SensorBinding
from .transport import poll_feed
from .errors import MalformedFeed, NetworkError

if TYPE_CHECKING:
    from .engine import NodeContext
    from .model import Message
    from .transport import BrokerMessage

TOPIC_ROOT = "seismocloud/sensors"
SENSOR_CHANNELS = ("temperature", "vibration", "status")

# Vocabulary that must never appear in a domain node's config dialog.
HIDDEN_TOKENS = (
    "broker", "topic", "qos", "tls", "mqtt", "credential",
    "password", "username", "url", "host", "port",
)


def resolve_topic(binding: SensorBinding, channel: str) -> str:
    """Pub-sub topic of one sensor channel; injective over (device, channel)."""
    if channel not in SENSOR_CHANNELS:
        raise ValueError(f"unknown sensor channel {channel!r}")
    return f"{TOPIC_ROOT}/{binding.device_id}/{channel}"


def hidden_config_check(descriptor: NodeTypeDescriptor) -> bool:
    """True iff no config field name or label leaks protocol vocabulary."""
    for spec in descriptor.config_schema:
        for text in (spec.name, spec.label):
            lowered = text.lower()
            if any(token in lowered for token in HIDDEN_TOKENS):
                return False
    return True


class TemperatureBehavior(NodeBehavior):
    """Emits the named sensor's temperature readings as numbers."""

    def start(self, ctx: "NodeContext") -> None:
        binding = ctx.registry.lookup(ctx.config["sensor"])
        topic = resolve_topic(binding, "temperature")
        ctx.subscribe(topic, lambda bm: self._on_reading(ctx, bm))

    def _on_reading(self, ctx: "NodeContext", broker_message: "BrokerMessage") -> None:
        body = broker_message.body.decode("utf-8", errors="replace")
        try:
            value = float(body)
        except ValueError:
            value = None
        if value is None or value != value or value in (float("inf"), float("-inf")):
            ctx.diagnostic(f"cannot read temperature value {body!r}")
            return
        ctx.emit(value, meta={"sensor": ctx.config["sensor"],
                              "channel": "temperature"})


class VibrationBehavior(NodeBehavior):
    """Emits one message per vibration detected by the named sensor."""

    def start(self, ctx: "NodeContext") -> None:
        binding = ctx.registry.lookup(ctx.config["sensor"])
        topic = resolve_topic(binding, "vibration")
        ctx.subscribe(topic, lambda bm: self._on_vibration(ctx, bm))

    def _on_vibration(self, ctx: "NodeContext", broker_message: "BrokerMessage") -> None:
        ctx.emit({"detectedAtMs": broker_message.received_at_ms},
                 meta={"sensor": ctx.config["sensor"], "channel": "vibration"})


class EarthquakeFeedBehavior(NodeBehavior):
    """Polls the official earthquake feed; one emission per new event."""

    def __init__(self):
        self._seen: set[str] = set()

    def start(self, ctx: "NodeContext") -> None:
        if ctx.feed_url is None:
            raise ValueError(
                "earthquake feed endpoint not configured (SEISMOFLOW_FEED_URL)")
        poll_ms = int(ctx.config["pollSeconds"] * 1000)
        ctx.schedule_periodic(poll_ms, lambda: self._poll(ctx), first_delay_ms=0)

    def _poll(self, ctx: "NodeContext") -> None:
        try:
            fresh, self._seen = poll_feed(ctx.feed_url, self._seen)
        except (NetworkError, MalformedFeed) as exc:
            ctx.diagnostic(str(exc))  # retry on the next cycle
            return
        floor = ctx.config["minMagnitude"]
        for event in fresh:
            if event.magnitude >= floor:
                ctx.emit(event.to_json_dict(), meta={"channel": "earthquake"})


class PerceptibleQuakesBehavior(NodeBehavior):
    """Emits earthquakes a person at the named sensor would notice."""

    def start(self, ctx: "NodeContext") -> None:
        binding = ctx.registry.lookup(ctx.config["sensor"])
        ctx.quake_listener(lambda event: self._on_quake(ctx, binding, event))

    def _on_quake(self, ctx: "NodeContext", binding: SensorBinding,
                  event: EarthquakeEvent) -> None:
        if not is_perceptible(event, binding.latitude, binding.longitude,
                              ctx.config["minMagnitude"]):
            return
        payload: dict[str, Any] = event.to_json_dict()
        payload["distanceKm"] = round(
            haversine_km(event.latitude, event.longitude,
                         binding.latitude, binding.longitude), 3)
        ctx.emit(payload, meta={"sensor": ctx.config["sensor"],
                                "channel": "earthquake"})


_SENSOR_FIELD = FieldSpec(
    "sensor", "Sensor name", "text", required=True,
    help="The name you gave the sensor when registering it.")

TEMPERATURE = NodeTypeDescriptor(
    type_name="sensor-temperature",
    display_name="Temperature",
    category="source",
    config_schema=(_SENSOR_FIELD,),
    outputs=1,
    behavior=TemperatureBehavior,
    domain=True,
)

VIBRATION = NodeTypeDescriptor(
    type_name="sensor-vibration",
    display_name="Vibration",
    category="source",
    config_schema=(_SENSOR_FIELD,),
    outputs=1,
    behavior=VibrationBehavior,
    domain=True,
)

EARTHQUAKE_FEED = NodeTypeDescriptor(
    type_name="earthquake-feed",
    display_name="Earthquake feed",
    category="source",
    config_schema=(
        FieldSpec("minMagnitude", "Minimum magnitude", "number", default=0.0,
                  help="Ignore earthquakes weaker than this."),
        FieldSpec("pollSeconds", "Check every (seconds)", "duration", default=60),
    ),
    outputs=1,
    behavior=EarthquakeFeedBehavior,
    domain=True,
)

PERCEPTIBLE_QUAKES = NodeTypeDescriptor(
    type_name="perceptible-quakes",
    display_name="Perceptible earthquakes",
    category="source",
    config_schema=(
        _SENSOR_FIELD,
        FieldSpec("minMagnitude", "Minimum magnitude", "number", default=2.0,
                  help="Ignore earthquakes weaker than this."),
    ),
    outputs=1,
    behavior=PerceptibleQuakesBehavior,
    domain=True,
)

DOMAIN_DESCRIPTORS = (TEMPERATURE, VIBRATION, EARTHQUAKE_FEED, PERCEPTIBLE_QUAKES)


def register_domain(palette: Palette) -> Palette:
    for descriptor in DOMAIN_DESCRIPTORS:
        palette.register(descriptor)
    return palette
