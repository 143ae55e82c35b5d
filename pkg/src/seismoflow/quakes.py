"""Earthquake events and the per-sensor perceptibility rule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

EARTH_RADIUS_KM = 6371.0

QUAKE_SOURCES = ("official-feed", "crowd")


@dataclass(frozen=True)
class EarthquakeEvent:
    event_id: str
    magnitude: float
    latitude: float
    longitude: float
    origin_time_ms: int
    source: str = "official-feed"

    def __post_init__(self):
        if not 0 <= self.magnitude < 12:
            raise ValueError(f"magnitude {self.magnitude} outside [0, 12)")
        if not -90 <= self.latitude <= 90:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180 <= self.longitude <= 180:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")
        if self.source not in QUAKE_SOURCES:
            raise ValueError(f"unknown event source {self.source!r}")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "id": self.event_id,
            "magnitude": self.magnitude,
            "lat": self.latitude,
            "lon": self.longitude,
            "originTimeMs": self.origin_time_ms,
            "source": self.source,
        }


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on a 6371 km sphere."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = math.radians(lat2 - lat1)
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def perceptible_radius_km(magnitude: float) -> float:
    """Distance limit within which a quake of this magnitude is noticeable.

    100 km at magnitude 3, doubling per magnitude unit. This is a
    deliberately simple monotone placeholder, not a seismological
    attenuation model; swap it out here if a real one is needed.
    """
    return 100.0 * 2.0 ** (magnitude - 3.0)


def is_perceptible(
    event: EarthquakeEvent,
    sensor_lat: float,
    sensor_lon: float,
    min_magnitude: float,
) -> bool:
    """True when the event clears the magnitude floor and is close enough."""
    if event.magnitude < min_magnitude:
        return False
    distance = haversine_km(event.latitude, event.longitude, sensor_lat, sensor_lon)
    return distance <= perceptible_radius_km(event.magnitude)
