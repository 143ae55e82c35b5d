"""Exception types shared across the platform."""

from __future__ import annotations


class SeismoflowError(Exception):
    """Base class for all platform errors."""


# --- flow document / model -------------------------------------------------

class MalformedDocument(SeismoflowError):
    """The flow document is not syntactically or structurally valid."""


class DanglingWire(MalformedDocument):
    """A wire references a node id that is not present in the flow."""

    def __init__(self, node_id: str):
        super().__init__(f"wire references unknown node {node_id!r}")
        self.node_id = node_id


class BadPort(MalformedDocument):
    """A wire leaves a port the source node does not declare."""

    def __init__(self, node_id: str, port: int, outputs: int):
        super().__init__(
            f"wire leaves port {port} of node {node_id!r}, which declares {outputs} output(s)"
        )
        self.node_id = node_id
        self.port = port


class DuplicateNodeId(MalformedDocument):
    """Two nodes in one flow share an id."""

    def __init__(self, node_id: str):
        super().__init__(f"duplicate node id {node_id!r}")
        self.node_id = node_id


# --- runtime ----------------------------------------------------------------

class UnknownNode(SeismoflowError):
    """A node id does not exist in the deployed flow."""

    def __init__(self, node_id: str):
        super().__init__(f"unknown node {node_id!r}")
        self.node_id = node_id


class DeployError(SeismoflowError):
    """A flow could not be (fully) deployed."""

    def __init__(self, node_id: str, cause: str):
        super().__init__(f"cannot deploy node {node_id!r}: {cause}")
        self.node_id = node_id
        self.cause = cause


class NotDeployed(SeismoflowError):
    """The operation needs a live deployment and there is none."""


# --- transport ---------------------------------------------------------------

class BadFilter(SeismoflowError):
    """Malformed pub-sub topic or topic filter."""


class Disconnected(SeismoflowError):
    """The broker connection is not available."""


class NetworkError(SeismoflowError):
    """An HTTP call (feed poll, webhook) failed at the network level."""


class MalformedFeed(SeismoflowError):
    """The earthquake feed endpoint returned a body we cannot parse."""


# --- sensor registry / simulator ---------------------------------------------

class UnknownSensor(SeismoflowError):
    """A sensor name does not resolve in the registry."""

    def __init__(self, sensor_name: str):
        super().__init__(f"unknown sensor {sensor_name!r}")
        self.sensor_name = sensor_name


class UnknownSensorInScenario(SeismoflowError):
    """A scenario event names a sensor the scenario does not declare."""

    def __init__(self, sensor_name: str):
        super().__init__(f"scenario event names undeclared sensor {sensor_name!r}")
        self.sensor_name = sensor_name
