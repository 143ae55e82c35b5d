from __future__ import annotations

import pytest

import seismoflow as sf


@pytest.fixture
def clock():
    return sf.VirtualClock()


@pytest.fixture
def broker(clock):
    return sf.InMemoryBroker(clock=clock)


@pytest.fixture
def palette():
    return sf.default_palette()


@pytest.fixture
def fig2_registry():
    return sf.SensorRegistry(list(sf.fig2_scenario().sensors))


def make_fig2_graph() -> sf.FlowGraph:
    """The reconstructed two-vibrations -> join -> template -> notify flow."""
    return sf.FlowGraph(
        id="fig2",
        label="When two devices vibrate, send an SMS",
        version=1,
        nodes=(
            sf.NodeSpec("vib-porch", "sensor-vibration", "Vibration (porch)",
                        {"sensor": "porch"}, 1),
            sf.NodeSpec("vib-garage", "sensor-vibration", "Vibration (garage)",
                        {"sensor": "garage"}, 1),
            sf.NodeSpec("coincide", "join-count", "Two devices",
                        {"count": 2, "windowMs": 30000}, 1),
            sf.NodeSpec("compose", "template", "Compose text",
                        {"template": "Vibration detected at {{sensors}}"}, 1),
            sf.NodeSpec("sms", "notify", "Send SMS", {"channel": "console"}, 0),
        ),
        wires=(
            sf.Wire("vib-porch", 0, "coincide"),
            sf.Wire("vib-garage", 0, "coincide"),
            sf.Wire("coincide", 0, "compose"),
            sf.Wire("compose", 0, "sms"),
        ),
    )


@pytest.fixture
def fig2_graph():
    return make_fig2_graph()


@pytest.fixture
def engine(broker, palette, fig2_registry, clock):
    e = sf.Engine(broker, palette, fig2_registry, clock)
    yield e
    e.stop_all()
