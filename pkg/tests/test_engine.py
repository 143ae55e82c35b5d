from __future__ import annotations

import random
from collections import Counter, defaultdict

import pytest

import seismoflow as sf
from seismoflow.errors import DeployError, NotDeployed, UnknownNode
from seismoflow.palette import NodeBehavior, NodeTypeDescriptor

from oracles import bfs_deliveries, random_transform_dag


def passthrough_graph(flow_id="chain"):
    """threshold (always true) wired into a debug sink."""
    return sf.FlowGraph(
        id=flow_id, label="", version=1,
        nodes=(
            sf.NodeSpec("thr", "threshold", "pass", {"operator": ">", "value": 30}, 1),
            sf.NodeSpec("dbg", "debug", "debug", {}, 0),
        ),
        wires=(sf.Wire("thr", 0, "dbg"),))


class TestDeploy:
    def test_fig2_two_subscriptions(self, engine, fig2_graph):
        deployment = engine.deploy(fig2_graph)
        assert len(deployment.subscriptions) == 2
        assert deployment.subscriptions == {
            ("seismocloud/sensors/dev-porch/vibration", "vib-porch"),
            ("seismocloud/sensors/dev-garage/vibration", "vib-garage"),
        }

    def test_empty_graph_zero_subscriptions(self, engine):
        deployment = engine.deploy(
            sf.FlowGraph(id="empty", label="", version=1, nodes=(), wires=()))
        assert deployment.subscriptions == set()
        assert deployment.state == "Deployed"

    def test_unknown_sensor_is_a_deploy_error(self, broker, palette, clock):
        engine = sf.Engine(broker, palette, sf.SensorRegistry(), clock)
        graph = sf.FlowGraph(
            id="f", label="", version=1,
            nodes=(sf.NodeSpec("v", "sensor-vibration", "v",
                               {"sensor": "attic"}, 1),),
            wires=())
        with pytest.raises(DeployError) as exc_info:
            engine.deploy(graph)
        assert "attic" in str(exc_info.value)
        assert broker.subscription_count() == 0  # nothing half-deployed

    def test_invalid_graph_is_a_deploy_error(self, engine):
        graph = sf.FlowGraph(
            id="f", label="", version=1,
            nodes=(sf.NodeSpec("x", "no-such-type", "x", {}, 1),), wires=())
        with pytest.raises(DeployError):
            engine.deploy(graph)

    def test_deploy_stop_deploy_identical_subscriptions(self, engine, fig2_graph):
        first = engine.deploy(fig2_graph)
        subs_before = set(first.subscriptions)
        first.stop()
        second = engine.deploy(fig2_graph)
        assert set(second.subscriptions) == subs_before

    def test_redeploy_replaces_not_duplicates(self, engine, broker, fig2_graph):
        engine.deploy(fig2_graph)
        assert broker.subscription_count() == 2
        replacement = engine.deploy(fig2_graph)
        assert broker.subscription_count() == 2
        assert engine.get("fig2") is replacement


class TestInject:
    def test_inject_into_debug_node(self, engine):
        graph = sf.FlowGraph(
            id="f", label="", version=1,
            nodes=(sf.NodeSpec("dbg", "debug", "d", {}, 0),), wires=())
        deployment = engine.deploy(graph)
        deployment.inject("dbg", payload=7)
        events = deployment.debug_events()
        assert len(events) == 1
        assert events[0].kind == "debug"
        assert events[0].payload == 7
        assert deployment.route_records == []  # sink: no further routing

    def test_threshold_forwards_to_debug(self, engine):
        deployment = engine.deploy(passthrough_graph())
        deployment.inject("thr", payload=42)
        events = deployment.debug_events()
        assert [e.payload for e in events] == [42]

    def test_threshold_drops_below(self, engine):
        deployment = engine.deploy(passthrough_graph())
        deployment.inject("thr", payload=30)  # strict >
        assert deployment.debug_events() == []

    def test_cycle_halts_with_loop_limit(self, broker, palette, clock):
        engine = sf.Engine(broker, palette, sf.SensorRegistry(), clock,
                           hop_limit=16)
        graph = sf.FlowGraph(
            id="loop", label="", version=1,
            nodes=(
                sf.NodeSpec("a", "threshold", "a", {"operator": ">", "value": -1}, 1),
                sf.NodeSpec("b", "threshold", "b", {"operator": ">", "value": -1}, 1),
            ),
            wires=(sf.Wire("a", 0, "b"), sf.Wire("b", 0, "a")))
        deployment = engine.deploy(graph)
        hops = []
        deployment.on_delivery = lambda n, m: hops.append(m.hop_count)
        deployment.inject("a", payload=1)
        diagnostics = [e for e in deployment.debug_events()
                       if e.kind == "diagnostic"]
        assert len(diagnostics) == 1
        assert "LoopLimit" in diagnostics[0].text
        assert max(hops) == 16  # never delivered beyond the limit

    def test_inject_after_stop(self, engine):
        deployment = engine.deploy(passthrough_graph())
        deployment.stop()
        with pytest.raises(NotDeployed):
            deployment.inject("thr", payload=1)

    def test_inject_unknown_node(self, engine):
        deployment = engine.deploy(passthrough_graph())
        with pytest.raises(UnknownNode):
            deployment.inject("ghost", payload=1)


class TestRouteFanout:
    def fanout_graph(self):
        return sf.FlowGraph(
            id="fan", label="", version=1,
            nodes=(
                sf.NodeSpec("src", "threshold", "s", {"operator": ">", "value": -1}, 1),
                sf.NodeSpec("d1", "debug", "1", {}, 0),
                sf.NodeSpec("d2", "debug", "2", {}, 0),
                sf.NodeSpec("d3", "debug", "3", {}, 0),
            ),
            wires=(sf.Wire("src", 0, "d1"), sf.Wire("src", 0, "d2"),
                   sf.Wire("src", 0, "d3")))

    def test_three_wires_three_records(self, engine):
        deployment = engine.deploy(self.fanout_graph())
        message = sf.Message(id="x1", payload=5, source_node="src",
                             timestamp_ms=0)
        records = deployment.route_fanout("src", 0, message)
        assert len(records) == 3
        assert [r.to_node for r in records] == ["d1", "d2", "d3"]
        assert all(r.message_id == "x1" for r in records)

    def test_no_wires_no_records(self, engine):
        deployment = engine.deploy(self.fanout_graph())
        message = sf.Message(id="x1", payload=5, source_node="d1",
                             timestamp_ms=0)
        assert deployment.route_fanout("d1", 0, message) == []

    def test_at_hop_limit_drops_with_diagnostic(self, broker, palette, clock):
        engine = sf.Engine(broker, palette, sf.SensorRegistry(), clock,
                           hop_limit=8)
        deployment = engine.deploy(self.fanout_graph())
        message = sf.Message(id="x1", payload=5, source_node="src",
                             timestamp_ms=0, hop_count=8)
        records = deployment.route_fanout("src", 0, message)
        assert records == []
        diagnostics = [e for e in deployment.debug_events()
                       if e.kind == "diagnostic"]
        assert len(diagnostics) == 1
        assert "LoopLimit" in diagnostics[0].text

    def test_copies_carry_suffixed_ids_and_incremented_hops(self, engine):
        deployment = engine.deploy(self.fanout_graph())
        received = []
        deployment.on_delivery = lambda n, m: received.append((n, m.id, m.hop_count))
        deployment.inject("src", payload=99)
        produced = [r.message_id for r in deployment.route_records][0]
        fanned = [entry for entry in received if entry[0] != "src"]
        assert [(n, i) for n, i, _ in fanned] == [
            ("d1", f"{produced}.0"), ("d2", f"{produced}.1"),
            ("d3", f"{produced}.2")]
        assert all(h == 1 for _, _, h in fanned)

    def test_copies_do_not_share_payload(self, engine):
        graph = sf.FlowGraph(
            id="share", label="", version=1,
            nodes=(
                sf.NodeSpec("src", "inject", "s", {"payload": '{"a": 1}'}, 1),
                sf.NodeSpec("d1", "debug", "1", {}, 0),
                sf.NodeSpec("d2", "debug", "2", {}, 0),
            ),
            wires=(sf.Wire("src", 0, "d1"), sf.Wire("src", 0, "d2")))
        deployment = engine.deploy(graph)
        seen = []
        deployment.on_delivery = lambda n, m: seen.append(m.payload)
        deployment.inject("src")  # manual trigger
        copies = [p for p in seen if p == {"a": 1}]
        assert len(copies) == 2
        assert copies[0] is not copies[1]


class TestStop:
    def test_subscriptions_cleared(self, engine, fig2_graph, broker):
        deployment = engine.deploy(fig2_graph)
        deployment.stop()
        assert deployment.subscriptions == set()
        assert deployment.state == "Stopped"
        assert broker.subscription_count() == 0

    def test_stop_twice_is_noop(self, engine, fig2_graph):
        deployment = engine.deploy(fig2_graph)
        deployment.stop()
        deployment.stop()
        assert deployment.state == "Stopped"

    def test_queued_messages_drain_before_stopped(self, engine):
        deployment = engine.deploy(passthrough_graph())
        deployment._paused = True  # hold the loop to build a backlog
        for i in range(100):
            deployment.inject("thr", payload=100 + i)
        assert deployment.debug_events() == []  # nothing processed yet
        deployment.stop()
        assert deployment.state == "Stopped"
        assert len(deployment.debug_events()) == 100
        assert len(deployment.route_records) == 100


class TestDebugEvents:
    def test_no_debug_nodes_no_events(self, engine):
        graph = sf.FlowGraph(
            id="f", label="", version=1,
            nodes=(sf.NodeSpec("thr", "threshold", "t",
                               {"operator": ">", "value": 0}, 1),),
            wires=())
        deployment = engine.deploy(graph)
        deployment.inject("thr", payload=5)
        assert deployment.debug_events() == []

    def test_handler_error_becomes_diagnostic(self, broker, clock):
        class Boom(NodeBehavior):
            def on_message(self, ctx, message):
                raise RuntimeError("kaput")

        palette = sf.default_palette()
        palette.register(NodeTypeDescriptor(
            type_name="boom", display_name="Boom", category="sink",
            config_schema=(), outputs=0, behavior=Boom))
        engine = sf.Engine(broker, palette, sf.SensorRegistry(), clock)
        graph = sf.FlowGraph(
            id="f", label="", version=1,
            nodes=(sf.NodeSpec("b", "boom", "b", {}, 0),), wires=())
        deployment = engine.deploy(graph)
        deployment.inject("b", payload=1)
        events = deployment.debug_events()
        assert len(events) == 1
        assert events[0].kind == "diagnostic"
        assert events[0].node_id == "b"
        assert "kaput" in events[0].text
        assert deployment.state == "Deployed"  # contained, still live

    def test_events_in_processing_order(self, engine):
        deployment = engine.deploy(passthrough_graph())
        for i in range(5):
            deployment.inject("thr", payload=1000 + i)
        assert [e.payload for e in deployment.debug_events()] == [
            1000, 1001, 1002, 1003, 1004]

    def test_listener_sees_live_events(self, engine):
        deployment = engine.deploy(passthrough_graph())
        live = []
        deployment.add_debug_listener(live.append)
        deployment.inject("thr", payload=77)
        assert [e.payload for e in live] == [77]


class TestRoutingProperties:
    def run_case(self, rng, palette):
        clock = sf.VirtualClock()
        broker = sf.InMemoryBroker(clock=clock)
        engine = sf.Engine(broker, palette, sf.SensorRegistry(), clock)
        graph = random_transform_dag(rng)
        deployment = engine.deploy(graph)

        deliveries = Counter()
        per_wire = defaultdict(list)

        def record(node_id, message):
            deliveries[(node_id, message.payload)] += 1
            per_wire[(message.source_node, node_id)].append(message.payload)

        deployment.on_delivery = record
        injections = []
        for k in range(rng.randint(1, 40)):
            node = rng.choice(graph.nodes).id
            payload = float(k)
            injections.append((node, payload))
            deployment.inject(node, payload=payload)
        return graph, deployment, deliveries, per_wire, injections

    def test_oracle_equivalence_and_exactly_once(self, palette):
        rng = random.Random(31337)
        for _ in range(60):
            graph, deployment, deliveries, per_wire, injections = \
                self.run_case(rng, palette)
            assert deliveries == bfs_deliveries(graph, injections)
            wire_counts = Counter(
                (r.message_id, r.from_node, r.to_node)
                for r in deployment.route_records)
            assert all(count == 1 for count in wire_counts.values())

    def test_per_wire_fifo(self, palette):
        rng = random.Random(777)
        for _ in range(40):
            _, _, _, per_wire, _ = self.run_case(rng, palette)
            for (_from, _to), payloads in per_wire.items():
                assert payloads == sorted(payloads)

    def test_runs_are_deterministic(self, palette):
        def run(seed):
            rng = random.Random(seed)
            _, deployment, _, _, _ = self.run_case(rng, palette)
            return deployment.route_records

        assert run(4242) == run(4242)
