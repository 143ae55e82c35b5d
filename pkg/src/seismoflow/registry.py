"""Sensor registry: the deployment-level map from human sensor names to devices.

Domain nodes are configured with a sensor *name* only; everything needed
to reach the device (its identifier, hence its pub-sub channels, plus its
coordinates for the perceptibility rule) lives here, outside node configs.

Registry document (UTF-8 JSON)::

    {"sensors": [{"name": "porch", "deviceId": "dev-1", "lat": 41.9, "lon": 12.5}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import MalformedDocument, UnknownSensor


@dataclass(frozen=True)
class SensorBinding:
    sensor_name: str
    device_id: str
    latitude: float
    longitude: float

    def __post_init__(self):
        if not self.sensor_name or not self.device_id:
            raise ValueError("sensor name and device id must be non-empty")
        if not -90 <= self.latitude <= 90:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180 <= self.longitude <= 180:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")


class SensorRegistry:
    """Lookup by sensor name; total over registered names, loud otherwise."""

    def __init__(self, bindings: "list[SensorBinding] | None" = None):
        self._by_name: dict[str, SensorBinding] = {}
        device_ids: set[str] = set()
        for binding in bindings or []:
            if binding.sensor_name in self._by_name:
                raise ValueError(f"duplicate sensor name {binding.sensor_name!r}")
            if binding.device_id in device_ids:
                raise ValueError(f"duplicate device id {binding.device_id!r}")
            self._by_name[binding.sensor_name] = binding
            device_ids.add(binding.device_id)

    def lookup(self, sensor_name: str) -> SensorBinding:
        try:
            return self._by_name[sensor_name]
        except KeyError:
            raise UnknownSensor(sensor_name) from None

    def names(self) -> list[str]:
        return sorted(self._by_name)

    def bindings(self) -> list[SensorBinding]:
        return list(self._by_name.values())

    def __len__(self) -> int:
        return len(self._by_name)

    def __contains__(self, sensor_name: str) -> bool:
        return sensor_name in self._by_name


def parse_registry(document: str) -> SensorRegistry:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid registry JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("sensors"), list):
        raise MalformedDocument("registry document needs a 'sensors' list")
    bindings = []
    for raw in doc["sensors"]:
        if not isinstance(raw, dict):
            raise MalformedDocument("each sensor entry must be an object")
        try:
            bindings.append(SensorBinding(
                sensor_name=raw["name"],
                device_id=raw["deviceId"],
                latitude=float(raw["lat"]),
                longitude=float(raw["lon"]),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad sensor entry {raw!r}: {exc}") from exc
    try:
        return SensorRegistry(bindings)
    except ValueError as exc:
        raise MalformedDocument(str(exc)) from exc


def load_registry(path: "str | Path") -> SensorRegistry:
    return parse_registry(Path(path).read_text(encoding="utf-8"))


def registry_document(registry: SensorRegistry) -> str:
    doc = {"sensors": [
        {"name": b.sensor_name, "deviceId": b.device_id,
         "lat": b.latitude, "lon": b.longitude}
        for b in registry.bindings()
    ]}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"
