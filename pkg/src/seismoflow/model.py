"""Flow-graph data model, persistence format, validation.

A FlowGraph is the persisted artifact of end-user work: nodes with
configs plus directed wires. All types here are immutable value objects;
the runtime never mutates a deployed graph.

Flow documents are UTF-8 JSON (extension ``.flow.json``)::

    {
      "version": 1,
      "id": "...",
      "label": "...",
      "nodes": [{"id": "...", "type": "...", "label": "...",
                 "config": {...}, "outputs": 1}],
      "wires": [{"from": {"node": "...", "output": 0}, "to": {"node": "..."}}]
    }

Serialization is canonical (sorted keys, fixed layout), so structurally
equal graphs produce byte-identical documents.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, TYPE_CHECKING

from .errors import (
    BadPort,
    DanglingWire,
    DuplicateNodeId,
    MalformedDocument,
    UnknownNode,
)

if TYPE_CHECKING:
    from .palette import Palette

log = logging.getLogger(__name__)

FLOW_FORMAT_VERSION = 1

_TOP_LEVEL_FIELDS = ("version", "id", "label", "nodes", "wires")


@dataclass(frozen=True)
class Message:
    """The unit routed between nodes.

    payload is a JSON-style value (number, text, boolean, map or list);
    meta carries text-only provenance such as the sensor name.
    """

    id: str
    payload: Any
    source_node: str
    timestamp_ms: int
    hop_count: int = 0
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.timestamp_ms < 0:
            raise ValueError("timestamp_ms must be >= 0")
        if self.hop_count < 0:
            raise ValueError("hop_count must be >= 0")


@dataclass(frozen=True)
class NodeSpec:
    """One node of a flow: palette type plus user config."""

    id: str
    type: str
    label: str
    config: dict[str, Any]
    outputs: int


@dataclass(frozen=True)
class Wire:
    """Directed link from an output port to a target node's single input."""

    from_node: str
    from_port: int
    to_node: str


@dataclass(frozen=True)
class FlowGraph:
    id: str
    label: str
    version: int
    nodes: tuple[NodeSpec, ...]
    wires: tuple[Wire, ...]

    def node(self, node_id: str) -> NodeSpec:
        for spec in self.nodes:
            if spec.id == node_id:
                return spec
        raise UnknownNode(node_id)

    def has_node(self, node_id: str) -> bool:
        return any(spec.id == node_id for spec in self.nodes)


@dataclass(frozen=True)
class ValidationIssue:
    severity: str  # "error" | "warning"
    node_id: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: node {self.node_id!r}: {self.message}"


def _require(condition: bool, detail: str) -> None:
    if not condition:
        raise MalformedDocument(detail)


def parse_flow(document: str) -> FlowGraph:
    """Parse a flow document into a FlowGraph whose invariants hold.

    Unknown top-level fields are ignored with a warning. Raises
    MalformedDocument (or a subclass: DanglingWire, BadPort,
    DuplicateNodeId) when the document cannot produce a valid graph.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "flow document must be a JSON object")

    for key in doc:
        if key not in _TOP_LEVEL_FIELDS:
            log.warning("ignoring unknown top-level field %r in flow document", key)
    for key in _TOP_LEVEL_FIELDS:
        _require(key in doc, f"missing top-level field {key!r}")

    version = doc["version"]
    _require(isinstance(version, int) and not isinstance(version, bool),
             "version must be an integer")
    _require(version == FLOW_FORMAT_VERSION,
             f"unsupported flow format version {version}")
    _require(isinstance(doc["id"], str) and doc["id"] != "", "id must be a non-empty string")
    _require(isinstance(doc["label"], str), "label must be a string")
    _require(isinstance(doc["nodes"], list), "nodes must be a list")
    _require(isinstance(doc["wires"], list), "wires must be a list")

    nodes = []
    seen_ids: set[str] = set()
    for raw in doc["nodes"]:
        _require(isinstance(raw, dict), "each node must be an object")
        for req, kind in (("id", str), ("type", str), ("label", str),
                          ("config", dict), ("outputs", int)):
            _require(req in raw, f"node missing field {req!r}")
            _require(isinstance(raw[req], kind) and not isinstance(raw[req], bool),
                     f"node field {req!r} has wrong type")
        _require(raw["outputs"] >= 0, f"node {raw['id']!r}: outputs must be >= 0")
        if raw["id"] in seen_ids:
            raise DuplicateNodeId(raw["id"])
        seen_ids.add(raw["id"])
        nodes.append(NodeSpec(id=raw["id"], type=raw["type"], label=raw["label"],
                              config=dict(raw["config"]), outputs=raw["outputs"]))

    by_id = {spec.id: spec for spec in nodes}
    wires = []
    seen_wires: set[tuple[str, int, str]] = set()
    for raw in doc["wires"]:
        _require(isinstance(raw, dict), "each wire must be an object")
        _require(isinstance(raw.get("from"), dict) and isinstance(raw.get("to"), dict),
                 "wire needs 'from' and 'to' objects")
        src, dst = raw["from"], raw["to"]
        _require(isinstance(src.get("node"), str), "wire 'from.node' must be a string")
        _require(isinstance(dst.get("node"), str), "wire 'to.node' must be a string")
        port = src.get("output")
        _require(isinstance(port, int) and not isinstance(port, bool) and port >= 0,
                 "wire 'from.output' must be a non-negative integer")
        if src["node"] not in by_id:
            raise DanglingWire(src["node"])
        if dst["node"] not in by_id:
            raise DanglingWire(dst["node"])
        declared = by_id[src["node"]].outputs
        if port >= declared:
            raise BadPort(src["node"], port, declared)
        triple = (src["node"], port, dst["node"])
        _require(triple not in seen_wires, f"duplicate wire {triple!r}")
        seen_wires.add(triple)
        wires.append(Wire(from_node=src["node"], from_port=port, to_node=dst["node"]))

    return FlowGraph(id=doc["id"], label=doc["label"], version=version,
                     nodes=tuple(nodes), wires=tuple(wires))


def serialize_flow(graph: FlowGraph) -> str:
    """Canonical flow document: sorted keys, two-space indent, newline-terminated.

    parse_flow(serialize_flow(g)) == g for every valid graph, and
    structurally equal graphs serialize to byte-identical text.
    """
    doc = {
        "version": graph.version,
        "id": graph.id,
        "label": graph.label,
        "nodes": [
            {"id": n.id, "type": n.type, "label": n.label,
             "config": n.config, "outputs": n.outputs}
            for n in graph.nodes
        ],
        "wires": [
            {"from": {"node": w.from_node, "output": w.from_port},
             "to": {"node": w.to_node}}
            for w in graph.wires
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def validate_flow(graph: FlowGraph, palette: "Palette") -> list[ValidationIssue]:
    """Check a graph against a palette; empty report means deployable.

    The report is deterministic and ordered by node id (graph-level wire
    problems are attributed to the wire's source node).
    """
    issues: list[ValidationIssue] = []

    seen: set[str] = set()
    for spec in graph.nodes:
        if spec.id in seen:
            issues.append(ValidationIssue("error", spec.id, "duplicate node id"))
            continue
        seen.add(spec.id)
        descriptor = palette.get(spec.type)
        if descriptor is None:
            issues.append(ValidationIssue("error", spec.id,
                                          f"unknown node type {spec.type!r}"))
            continue
        if spec.outputs != descriptor.outputs:
            issues.append(ValidationIssue(
                "error", spec.id,
                f"declares {spec.outputs} output(s), type {spec.type!r} "
                f"has {descriptor.outputs}"))
        for problem in descriptor.check_config(spec.config):
            issues.append(ValidationIssue("error", spec.id, problem))

    node_ids = {spec.id for spec in graph.nodes}
    wire_triples: set[tuple[str, int, str]] = set()
    for wire in graph.wires:
        if wire.from_node not in node_ids:
            issues.append(ValidationIssue("error", wire.from_node,
                                          "wire leaves a node that does not exist"))
            continue
        if wire.to_node not in node_ids:
            issues.append(ValidationIssue("error", wire.from_node,
                                          f"wire targets unknown node {wire.to_node!r}"))
        declared = graph.node(wire.from_node).outputs
        if not 0 <= wire.from_port < declared:
            issues.append(ValidationIssue(
                "error", wire.from_node,
                f"wire leaves port {wire.from_port}, node declares {declared} output(s)"))
        triple = (wire.from_node, wire.from_port, wire.to_node)
        if triple in wire_triples:
            issues.append(ValidationIssue("error", wire.from_node,
                                          f"duplicate wire {triple!r}"))
        wire_triples.add(triple)

    issues.sort(key=lambda issue: issue.node_id)
    return issues


def downstream(graph: FlowGraph, node_id: str, port: int) -> list[str]:
    """Target node ids of all wires leaving (node_id, port), in wire order."""
    if not graph.has_node(node_id):
        raise UnknownNode(node_id)
    return [w.to_node for w in graph.wires
            if w.from_node == node_id and w.from_port == port]
