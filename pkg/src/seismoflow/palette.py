"""Node palette: type descriptors, config schemas, behavior binding.

A NodeTypeDescriptor is what the editor renders as a palette card and
what the runtime instantiates on deploy. Config schemas carry the
human-readable labels end users see; behaviors carry the semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable

if TYPE_CHECKING:
    from .engine import NodeContext
    from .model import Message

CATEGORIES = ("source", "transform", "sink")
FIELD_KINDS = ("text", "number", "boolean", "duration", "choice")


@dataclass(frozen=True)
class FieldSpec:
    """One entry of a node's config dialog."""

    name: str
    label: str
    kind: str
    required: bool = False
    default: Any = None
    help: str = ""
    choices: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.label:
            raise ValueError(f"field {self.name!r} needs a non-empty label")
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"field {self.name!r} has unknown kind {self.kind!r}")
        if self.kind == "choice" and not self.choices:
            raise ValueError(f"choice field {self.name!r} needs choices")

    def accepts(self, value: Any) -> bool:
        """Type check one config value against this field's kind."""
        if self.kind == "text":
            return isinstance(value, str)
        if self.kind == "boolean":
            return isinstance(value, bool)
        if self.kind == "number":
            return isinstance(value, (int, float)) and not isinstance(value, bool)
        if self.kind == "duration":
            return (
                isinstance(value, (int, float))
                and not isinstance(value, bool)
                and value >= 0
            )
        return isinstance(value, str) and value in (self.choices or ())

    def to_json_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "name": self.name,
            "label": self.label,
            "kind": self.kind,
            "required": self.required,
            "default": self.default,
            "help": self.help,
        }
        if self.choices is not None:
            doc["choices"] = list(self.choices)
        return doc


class NodeBehavior:
    """Runtime semantics of one node instance.

    One instance is created per node per deployment. All methods run on
    the deployment's serial event loop, so instances may keep private
    state without locks.
    """

    def start(self, ctx: "NodeContext") -> None:
        """Deploy-time hook: sources subscribe to topics / set timers here."""

    def on_message(self, ctx: "NodeContext", message: "Message") -> None:
        """Handle one consumed message."""

    def stop(self, ctx: "NodeContext") -> None:
        """Teardown hook; subscriptions and timers are cancelled by the engine."""


@dataclass(frozen=True)
class NodeTypeDescriptor:
    """A palette entry: schema, port arity, behavior binding."""

    type_name: str
    display_name: str
    category: str
    config_schema: tuple[FieldSpec, ...]
    outputs: int
    behavior: Callable[[], NodeBehavior]
    domain: bool = False
    extra_check: Callable[[dict[str, Any]], list[str]] | None = field(
        default=None, compare=False
    )

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        names = [f.name for f in self.config_schema]
        if len(names) != len(set(names)):
            raise ValueError(f"{self.type_name}: duplicate config field names")
        if self.category == "source" and self.outputs < 1:
            raise ValueError(f"{self.type_name}: source nodes need outputs >= 1")
        if self.category == "sink" and self.outputs != 0:
            raise ValueError(f"{self.type_name}: sink nodes have outputs = 0")
        if self.outputs < 0:
            raise ValueError(f"{self.type_name}: outputs must be >= 0")

    def check_config(self, config: dict[str, Any]) -> list[str]:
        """Return problem descriptions, empty when the config is acceptable.

        Unknown config keys are ignored: they do not affect behavior and
        rejecting them would break forward compatibility of stored flows.
        """
        problems = []
        for spec in self.config_schema:
            if spec.name not in config:
                if spec.required:
                    problems.append(f"missing required field {spec.name!r}")
                continue
            if not spec.accepts(config[spec.name]):
                problems.append(
                    f"field {spec.name!r} does not accept {config[spec.name]!r}"
                )
        if not problems and self.extra_check is not None:
            problems.extend(self.extra_check(self.effective_config(config)))
        return problems

    def effective_config(self, config: dict[str, Any]) -> dict[str, Any]:
        """Config merged over schema defaults; unknown keys dropped."""
        merged = {f.name: f.default for f in self.config_schema if f.default is not None}
        merged.update(
            {k: v for k, v in config.items() if any(f.name == k for f in self.config_schema)}
        )
        return merged

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "typeName": self.type_name,
            "displayName": self.display_name,
            "category": self.category,
            "domain": self.domain,
            "outputs": self.outputs,
            "configSchema": [f.to_json_dict() for f in self.config_schema],
        }


class Palette:
    """Registry of node type descriptors, keyed by type name."""

    def __init__(self, descriptors: "list[NodeTypeDescriptor] | None" = None):
        self._by_name: dict[str, NodeTypeDescriptor] = {}
        for d in descriptors or []:
            self.register(d)

    def register(self, descriptor: NodeTypeDescriptor) -> None:
        if descriptor.type_name in self._by_name:
            raise ValueError(f"node type {descriptor.type_name!r} already registered")
        self._by_name[descriptor.type_name] = descriptor

    def get(self, type_name: str) -> NodeTypeDescriptor | None:
        return self._by_name.get(type_name)

    def descriptors(self) -> list[NodeTypeDescriptor]:
        return list(self._by_name.values())

    def __contains__(self, type_name: str) -> bool:
        return type_name in self._by_name

    def __len__(self) -> int:
        return len(self._by_name)
