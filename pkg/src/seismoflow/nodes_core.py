"""Generic building-block nodes.

These are the protocol-free parts of a flow: stimulus (inject), flow
control (threshold), coincidence detection (join-count), text rendering
(template) and outputs (notify, debug).
"""

from __future__ import annotations

import copy
import json
import re
import urllib.error
import urllib.request
from typing import TYPE_CHECKING, Any

from .palette import FieldSpec, NodeBehavior, NodeTypeDescriptor, Palette

if TYPE_CHECKING:
    from .engine import NodeContext
    from .model import Message

PLACEHOLDER = re.compile(r"\{\{([^{}]*)\}\}")

THRESHOLD_OPERATORS = {
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
}


def format_value(value: Any) -> str:
    """Render a payload value as user-facing text."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float)):
        return repr(value) if isinstance(value, float) else str(value)
    return json.dumps(value, sort_keys=True)


def parse_payload_text(text: str) -> Any:
    """Inject's payload text: JSON when it parses, literal text otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


class InjectBehavior(NodeBehavior):
    """Emits a configured payload on manual trigger or on a timer."""

    def start(self, ctx: "NodeContext") -> None:
        interval = ctx.config.get("intervalMs")
        if interval:
            ctx.schedule_periodic(int(interval), lambda: self._fire(ctx))

    def on_message(self, ctx: "NodeContext", message: "Message") -> None:
        # Any delivered message acts as the manual trigger button.
        self._fire(ctx)

    def _fire(self, ctx: "NodeContext") -> None:
        text = ctx.config.get("payload")
        payload = {} if text in (None, "") else parse_payload_text(text)
        ctx.emit(copy.deepcopy(payload))


class ThresholdBehavior(NodeBehavior):
    """Forwards numeric payloads that satisfy the comparison, drops the rest."""

    def on_message(self, ctx: "NodeContext", message: "Message") -> None:
        value = self._coerce(message.payload)
        if value is None:
            ctx.diagnostic(
                f"threshold needs a numeric payload, got {message.payload!r}",
                message)
            return
        op = THRESHOLD_OPERATORS[ctx.config["operator"]]
        if op(value, ctx.config["value"]):
            ctx.emit(copy.deepcopy(message.payload), meta=dict(message.meta))

    @staticmethod
    def _coerce(payload: Any) -> "float | None":
        if isinstance(payload, bool):
            return None
        if isinstance(payload, (int, float)):
            return float(payload)
        if isinstance(payload, str):
            try:
                return float(payload)
            except ValueError:
                return None
        return None


class JoinCountBehavior(NodeBehavior):
    """Fires once when enough distinct sources coincide within the window.

    Duplicate keys refresh their timestamp without raising the distinct
    count; after each emission the window state resets fully, so one
    coincidence produces one combined message, not a storm.
    """

    def __init__(self):
        self._seen: dict[str, tuple[int, Any]] = {}  # key -> (last ms, payload)

    def on_message(self, ctx: "NodeContext", message: "Message") -> None:
        required = int(ctx.config["count"])
        window_ms = ctx.config["windowMs"]
        key = self._key_of(ctx.config["distinctBy"], message)
        now = ctx.clock.now_ms()
        self._seen[key] = (now, message.payload)
        cutoff = now - window_ms
        self._seen = {k: v for k, v in self._seen.items() if v[0] >= cutoff}
        if len(self._seen) < required:
            return
        entries = sorted(self._seen.items(), key=lambda kv: (kv[1][0], kv[0]))
        payloads = [copy.deepcopy(payload) for _, (_, payload) in entries]
        keys = [key for key, _ in entries]
        self._seen.clear()
        ctx.emit(payloads, meta={"sensors": ",".join(keys), "count": str(len(keys))})

    @staticmethod
    def _key_of(mode: str, message: "Message") -> str:
        if mode == "sensor-name":
            return message.meta.get("sensor") or message.source_node
        return message.source_node


class TemplateBehavior(NodeBehavior):
    """Renders text, filling {{name}} from meta, payload maps, or the payload."""

    def on_message(self, ctx: "NodeContext", message: "Message") -> None:
        def fill(match: re.Match) -> str:
            name = match.group(1).strip()
            if name in message.meta:
                return message.meta[name]
            if isinstance(message.payload, dict) and name in message.payload:
                return format_value(message.payload[name])
            if name == "payload":
                return format_value(message.payload)
            ctx.diagnostic(f"template placeholder {{{{{name}}}}} is not filled "
                           f"by this message", message)
            return ""

        rendered = PLACEHOLDER.sub(fill, ctx.config["template"])
        ctx.emit(rendered, meta=dict(message.meta))


def check_template_config(config: dict[str, Any]) -> list[str]:
    """Malformed templates are rejected at validation time, not at runtime."""
    text = config.get("template")
    if not isinstance(text, str):
        return []
    leftover = PLACEHOLDER.sub("", text)
    if "{{" in leftover or "}}" in leftover:
        return ["template has unbalanced {{ }} markers"]
    return []


class NotifyBehavior(NodeBehavior):
    """Delivers the rendered text to a person: console line or webhook POST."""

    def on_message(self, ctx: "NodeContext", message: "Message") -> None:
        text = format_value(message.payload)
        if ctx.config["channel"] == "console":
            print(f"NOTIFY {text}", flush=True)
            ctx.notify_confirmation(text, message)
            return
        target = ctx.config.get("target", "")
        try:
            request = urllib.request.Request(
                target, data=text.encode("utf-8"), method="POST",
                headers={"Content-Type": "text/plain; charset=utf-8"})
            with urllib.request.urlopen(request, timeout=5.0):
                pass
        except urllib.error.HTTPError as exc:
            ctx.diagnostic(f"webhook returned status {exc.code}", message)
        except (urllib.error.URLError, OSError, ValueError) as exc:
            ctx.diagnostic(f"webhook failed: {exc}", message)
        else:
            ctx.notify_confirmation(text, message)


def check_notify_config(config: dict[str, Any]) -> list[str]:
    if config.get("channel") == "webhook":
        target = config.get("target", "")
        if not isinstance(target, str) or not target.startswith(("http://", "https://")):
            return ["webhook channel needs an http(s) destination"]
    return []


class DebugBehavior(NodeBehavior):
    """Publishes every consumed message to the live debug stream."""

    def on_message(self, ctx: "NodeContext", message: "Message") -> None:
        ctx.debug(message)


def check_join_config(config: dict[str, Any]) -> list[str]:
    problems = []
    count = config.get("count")
    if count is not None and (count != int(count) or count < 2):
        problems.append("sensor count must be a whole number of at least 2")
    if config.get("windowMs", 1) <= 0:
        problems.append("time window must be longer than zero")
    return problems


INJECT = NodeTypeDescriptor(
    type_name="inject",
    display_name="Inject",
    category="source",
    config_schema=(
        FieldSpec("payload", "Value to send", "text",
                  help="JSON or plain text; empty sends an empty map."),
        FieldSpec("intervalMs", "Repeat every (ms)", "duration",
                  help="Leave empty to fire only on manual trigger."),
    ),
    outputs=1,
    behavior=InjectBehavior,
)

THRESHOLD = NodeTypeDescriptor(
    type_name="threshold",
    display_name="Threshold",
    category="transform",
    config_schema=(
        FieldSpec("operator", "Comparison", "choice", required=True, default=">",
                  choices=(">", ">=", "<", "<=", "=")),
        FieldSpec("value", "Compare against", "number", required=True),
    ),
    outputs=1,
    behavior=ThresholdBehavior,
)

JOIN_COUNT = NodeTypeDescriptor(
    type_name="join-count",
    display_name="Coincidence join",
    category="transform",
    config_schema=(
        FieldSpec("count", "How many distinct sources", "number", default=2),
        FieldSpec("windowMs", "Within time window (ms)", "duration", default=30000),
        FieldSpec("distinctBy", "Count distinct by", "choice",
                  default="sensor-name", choices=("sensor-name", "source-node")),
    ),
    outputs=1,
    behavior=JoinCountBehavior,
    extra_check=check_join_config,
)

TEMPLATE = NodeTypeDescriptor(
    type_name="template",
    display_name="Message template",
    category="transform",
    config_schema=(
        FieldSpec("template", "Message text", "text", required=True,
                  help="Use {{name}} to insert values, e.g. {{sensor}} or {{payload}}."),
    ),
    outputs=1,
    behavior=TemplateBehavior,
    extra_check=check_template_config,
)

NOTIFY = NodeTypeDescriptor(
    type_name="notify",
    display_name="Notify",
    category="sink",
    config_schema=(
        FieldSpec("channel", "Send via", "choice", required=True,
                  default="console", choices=("console", "webhook")),
        FieldSpec("target", "Destination", "text",
                  help="Web address to post to (webhook channel only)."),
    ),
    outputs=0,
    behavior=NotifyBehavior,
    extra_check=check_notify_config,
)

DEBUG = NodeTypeDescriptor(
    type_name="debug",
    display_name="Debug",
    category="sink",
    config_schema=(),
    outputs=0,
    behavior=DebugBehavior,
)

CORE_DESCRIPTORS = (INJECT, THRESHOLD, JOIN_COUNT, TEMPLATE, NOTIFY, DEBUG)


def register_core(palette: Palette) -> Palette:
    for descriptor in CORE_DESCRIPTORS:
        palette.register(descriptor)
    return palette
