"""Desk-scale stand-in for the sensor fleet.

Scenarios script what the fleet does: virtual sensors publish vibration
and temperature over the broker, and earthquakes appear on a scripted
feed server. At time scale 0 the run executes in virtual time — no real
sleeping — which makes window logic and audit logs exactly reproducible.

Scenario file (UTF-8 JSON, extension ``.scenario.json``)::

    {"sensors": [{"name": ..., "deviceId": ..., "lat": ..., "lon": ...}],
     "events": [{"atMs": 0, "kind": "vibration", "sensorName": "porch"},
                {"atMs": 100, "kind": "temperature", "sensorName": "porch", "value": 21.5},
                {"atMs": 200, "kind": "quake", "quake": {"id": "q1", "magnitude": 4.0,
                 "lat": 41.9, "lon": 12.5, "originTimeMs": 200}}]}
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .clock import Clock, RealClock, VirtualClock
from .errors import MalformedDocument, UnknownSensorInScenario
from .nodes_domain import resolve_topic
from .quakes import EarthquakeEvent
from .registry import SensorBinding
from .transport import InMemoryBroker

EVENT_KINDS = ("vibration", "temperature", "quake")

VIBRATION_BODY = b"1"


@dataclass(frozen=True)
class ScenarioEvent:
    at_ms: int
    kind: str
    sensor_name: str | None = None
    value: float | None = None
    quake: EarthquakeEvent | None = None

    def __post_init__(self):
        if self.at_ms < 0:
            raise ValueError("event offsets must be >= 0")
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown scenario event kind {self.kind!r}")
        if self.kind in ("vibration", "temperature") and not self.sensor_name:
            raise ValueError(f"{self.kind} events need a sensorName")
        if self.kind == "temperature" and self.value is None:
            raise ValueError("temperature events need a value")
        if self.kind == "quake":
            if self.quake is None:
                raise ValueError("quake events need a quake object")
            if self.sensor_name is not None:
                raise ValueError("quake events must not name a sensor")


@dataclass(frozen=True)
class Scenario:
    sensors: tuple[SensorBinding, ...]
    events: tuple[ScenarioEvent, ...]

    def __post_init__(self):
        offsets = [e.at_ms for e in self.events]
        if offsets != sorted(offsets):
            raise ValueError("scenario events must be sorted by atMs")

    def binding(self, sensor_name: str) -> SensorBinding:
        for sensor in self.sensors:
            if sensor.sensor_name == sensor_name:
                return sensor
        raise UnknownSensorInScenario(sensor_name)


@dataclass
class RunReport:
    counts: dict[str, int] = field(default_factory=lambda: {k: 0 for k in EVENT_KINDS})
    publications: int = 0

    @property
    def events(self) -> int:
        return sum(self.counts.values())


def parse_scenario(document: str) -> Scenario:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid scenario JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocument("scenario document must be a JSON object")
    try:
        sensors = tuple(
            SensorBinding(sensor_name=raw["name"], device_id=raw["deviceId"],
                          latitude=float(raw["lat"]), longitude=float(raw["lon"]))
            for raw in doc.get("sensors", []))
        events = []
        for raw in doc.get("events", []):
            quake = None
            if "quake" in raw:
                q = raw["quake"]
                quake = EarthquakeEvent(
                    event_id=str(q["id"]), magnitude=float(q["magnitude"]),
                    latitude=float(q["lat"]), longitude=float(q["lon"]),
                    origin_time_ms=int(q["originTimeMs"]),
                    source=q.get("source", "official-feed"))
            events.append(ScenarioEvent(
                at_ms=int(raw["atMs"]), kind=raw["kind"],
                sensor_name=raw.get("sensorName"),
                value=raw.get("value"), quake=quake))
        return Scenario(sensors=sensors, events=tuple(events))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"bad scenario document: {exc}") from exc


def load_scenario(path: "str | Path") -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def scenario_document(scenario: Scenario) -> str:
    events = []
    for e in scenario.events:
        raw: dict = {"atMs": e.at_ms, "kind": e.kind}
        if e.sensor_name is not None:
            raw["sensorName"] = e.sensor_name
        if e.value is not None:
            raw["value"] = e.value
        if e.quake is not None:
            raw["quake"] = e.quake.to_json_dict()
        events.append(raw)
    doc = {
        "sensors": [{"name": s.sensor_name, "deviceId": s.device_id,
                     "lat": s.latitude, "lon": s.longitude} for s in scenario.sensors],
        "events": events,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


class ScriptedFeedServer:
    """Embedded HTTP server playing the official earthquake feed.

    Events become visible from a per-event timestamp onwards, judged
    against the injected clock, so virtual-time runs control what each
    poll sees.
    """

    def __init__(self, clock: "Clock | None" = None):
        self._clock = clock or RealClock()
        self._events: list[tuple[int, EarthquakeEvent]] = []
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802 (http.server API)
                body = json.dumps(
                    [e.to_json_dict() for e in outer.visible_events()]).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):  # keep test output quiet
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self._httpd.server_address[1]}/quakes"

    def add_event(self, event: EarthquakeEvent,
                  visible_from_ms: "int | None" = None) -> None:
        with self._lock:
            at = self._clock.now_ms() if visible_from_ms is None else visible_from_ms
            self._events.append((at, event))

    def visible_events(self) -> list[EarthquakeEvent]:
        now = self._clock.now_ms()
        with self._lock:
            return [event for visible_from, event in self._events
                    if visible_from <= now]

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "ScriptedFeedServer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def run_scenario(
    scenario: Scenario,
    broker: InMemoryBroker,
    feed_server: "ScriptedFeedServer | None" = None,
    time_scale: float = 0.0,
    clock: "Clock | None" = None,
) -> RunReport:
    """Play a scenario against the broker (and feed server, for quakes).

    time_scale multiplies event offsets into real sleeping; 0 means run
    as fast as possible. When the shared clock is virtual it is advanced
    to each event's offset, firing due timers (pollers, windows) on the
    way, which keeps the whole run deterministic.
    """
    clock = clock or RealClock()
    for event in scenario.events:
        if event.sensor_name is not None:
            scenario.binding(event.sensor_name)  # fail before publishing anything
        if event.kind == "quake" and feed_server is None:
            raise ValueError("scenario has quake events but no feed server")

    report = RunReport()
    base_ms = clock.now_ms()
    previous_ms = 0
    for event in scenario.events:
        if time_scale > 0:
            time.sleep(max(0, (event.at_ms - previous_ms)) * time_scale / 1000.0)
        previous_ms = event.at_ms
        if isinstance(clock, VirtualClock):
            clock.advance_to(base_ms + event.at_ms)

        if event.kind == "vibration":
            binding = scenario.binding(event.sensor_name)
            broker.publish(resolve_topic(binding, "vibration"), VIBRATION_BODY)
            report.publications += 1
        elif event.kind == "temperature":
            binding = scenario.binding(event.sensor_name)
            broker.publish(resolve_topic(binding, "temperature"), str(event.value))
            report.publications += 1
        else:
            feed_server.add_event(event.quake, visible_from_ms=base_ms + event.at_ms)
        report.counts[event.kind] += 1
    return report


def fig2_scenario() -> Scenario:
    """Two home sensors, one vibration each, 5 s apart — comfortably inside
    the default 30 s coincidence window."""
    porch = SensorBinding("porch", "dev-porch", 41.902, 12.496)
    garage = SensorBinding("garage", "dev-garage", 41.910, 12.500)
    return Scenario(
        sensors=(porch, garage),
        events=(
            ScenarioEvent(at_ms=0, kind="vibration", sensor_name="porch"),
            ScenarioEvent(at_ms=5000, kind="vibration", sensor_name="garage"),
        ),
    )
