"""SeismoFlow: flow-based programming for crowd-sensed earthquake fleets.

Wire palette nodes into flows, deploy them on the event-driven runtime,
and let domain nodes hide every pub-sub detail behind sensor names.
"""

from __future__ import annotations

from .clock import Clock, RealClock, VirtualClock
from .engine import DebugEvent, Deployment, Engine, RouteRecord
from .model import (
    FlowGraph,
    Message,
    NodeSpec,
    ValidationIssue,
    Wire,
    downstream,
    parse_flow,
    serialize_flow,
    validate_flow,
)
from .palette import FieldSpec, NodeBehavior, NodeTypeDescriptor, Palette
from .quakes import EarthquakeEvent, haversine_km, is_perceptible
from .registry import SensorBinding, SensorRegistry, load_registry, parse_registry
from .simulator import (
    RunReport,
    Scenario,
    ScenarioEvent,
    ScriptedFeedServer,
    fig2_scenario,
    load_scenario,
    parse_scenario,
    run_scenario,
)
from .transport import BrokerMessage, BrokerProfile, InMemoryBroker, poll_feed, topic_matches

__version__ = "0.1.0"


def core_palette() -> Palette:
    """Palette with only the generic building-block nodes."""
    from .nodes_core import register_core

    return register_core(Palette())


def default_palette() -> Palette:
    """The full palette: core nodes plus the sensor/earthquake nodes."""
    from .nodes_core import register_core
    from .nodes_domain import register_domain

    return register_domain(register_core(Palette()))


__all__ = [
    "Clock", "RealClock", "VirtualClock",
    "DebugEvent", "Deployment", "Engine", "RouteRecord",
    "FlowGraph", "Message", "NodeSpec", "ValidationIssue", "Wire",
    "downstream", "parse_flow", "serialize_flow", "validate_flow",
    "FieldSpec", "NodeBehavior", "NodeTypeDescriptor", "Palette",
    "EarthquakeEvent", "haversine_km", "is_perceptible",
    "SensorBinding", "SensorRegistry", "load_registry", "parse_registry",
    "RunReport", "Scenario", "ScenarioEvent", "ScriptedFeedServer",
    "fig2_scenario", "load_scenario", "parse_scenario", "run_scenario",
    "BrokerMessage", "BrokerProfile", "InMemoryBroker", "poll_feed",
    "topic_matches",
    "core_palette", "default_palette",
]
