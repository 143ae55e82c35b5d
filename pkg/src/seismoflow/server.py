"""HTTP service for the flow editor: palette, flow CRUD, deploy, live events.

All bodies are UTF-8 JSON. Every non-success response is an ApiError
body with a code from a fixed set, so clients only ever see two shapes.
The debug stream is served as server-sent events: one JSON object per
``data:`` line.

Flows are persisted as one canonical ``<id>.flow.json`` file per flow in
the data directory (written atomically), which makes PUT → GET return
byte-identical documents.
"""

from __future__ import annotations

import json
import mimetypes
import os
import queue
import threading
import urllib.parse
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any

from .engine import DebugEvent, Engine
from .errors import DeployError, MalformedDocument, UnknownSensorInScenario
from .model import FlowGraph, parse_flow, serialize_flow, validate_flow
from .simulator import ScriptedFeedServer, parse_scenario, run_scenario

DEFAULT_PORT = 8750
ERROR_CODES = ("malformed", "validation_failed", "not_found", "not_deployed",
               "conflict")


@dataclass(frozen=True)
class ApiError(Exception):
    http_status: int
    code: str
    message: str
    report: "list[dict[str, str]] | None" = field(default=None)

    def __post_init__(self):
        if self.code not in ERROR_CODES:
            raise ValueError(f"unknown api error code {self.code!r}")

    def to_json_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "httpStatus": self.http_status,
            "code": self.code,
            "message": self.message,
        }
        if self.report is not None:
            doc["report"] = self.report
        return doc


class FlowStore:
    """One canonical flow document per flow id, under the data directory."""

    def __init__(self, data_dir: "str | Path"):
        self._dir = Path(data_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, flow_id: str) -> Path:
        safe = urllib.parse.quote(flow_id, safe="")
        return self._dir / f"{safe}.flow.json"

    def save(self, graph: FlowGraph) -> str:
        document = serialize_flow(graph)
        path = self._path(graph.id)
        with self._lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(document, encoding="utf-8")
            os.replace(tmp, path)
        return document

    def load(self, flow_id: str) -> "str | None":
        path = self._path(flow_id)
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def flow_ids(self) -> list[str]:
        ids = []
        for path in sorted(self._dir.glob("*.flow.json")):
            ids.append(urllib.parse.unquote(path.name[: -len(".flow.json")]))
        return ids

    def delete(self, flow_id: str) -> bool:
        path = self._path(flow_id)
        with self._lock:
            if not path.exists():
                return False
            path.unlink()
            return True


class SeismoflowServer:
    """Serves the editor API on top of one Engine instance."""

    def __init__(
        self,
        engine: Engine,
        store: FlowStore,
        host: str = "127.0.0.1",
        port: int = DEFAULT_PORT,
        ui_dir: "str | Path | None" = None,
    ):
        self.engine = engine
        self.store = store
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self._deployed_docs: dict[str, str] = {}
        self._lock = threading.Lock()
        self._sse_clients: list[queue.Queue] = []
        self._closing = False
        # With no external feed configured, an embedded scripted feed
        # backs quake nodes and the simulate endpoint.
        self._feed_server: ScriptedFeedServer | None = None
        if engine.feed_url is None:
            self._feed_server = ScriptedFeedServer(engine.clock)
            engine.feed_url = self._feed_server.url

        engine.add_debug_listener(self._broadcast_event)

        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def _cors(self):
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods",
                                 "GET, PUT, POST, DELETE, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")

            def _send_json(self, status: int, payload: Any,
                           raw_text: "str | None" = None):
                body = (raw_text if raw_text is not None
                        else json.dumps(payload)).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self._cors()
                self.end_headers()
                self.wfile.write(body)

            def _read_body(self) -> str:
                length = int(self.headers.get("Content-Length", "0"))
                return self.rfile.read(length).decode("utf-8")

            def _dispatch(self, method: str):
                path = urllib.parse.urlparse(self.path)
                query = urllib.parse.parse_qs(path.query)
                try:
                    server._route(self, method, path.path, query)
                except ApiError as error:
                    self._send_json(error.http_status, error.to_json_dict())
                except BrokenPipeError:
                    pass
                except Exception as exc:  # defensive: keep one bad request contained
                    self._send_json(500, {
                        "httpStatus": 500, "code": "malformed",
                        "message": f"internal error: {exc}"})

            def do_GET(self):  # noqa: N802
                self._dispatch("GET")

            def do_PUT(self):  # noqa: N802
                self._dispatch("PUT")

            def do_POST(self):  # noqa: N802
                self._dispatch("POST")

            def do_DELETE(self):  # noqa: N802
                self._dispatch("DELETE")

            def do_OPTIONS(self):  # noqa: N802
                self.send_response(204)
                self._cors()
                self.send_header("Content-Length", "0")
                self.end_headers()

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    # -- lifecycle --------------------------------------------------------

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def close(self) -> None:
        self._closing = True
        for q in list(self._sse_clients):
            q.put(None)
        self.engine.stop_all()
        if self._feed_server is not None:
            self._feed_server.close()
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "SeismoflowServer":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- routing ----------------------------------------------------------

    def _route(self, handler, method: str, path: str,
               query: dict[str, list[str]]) -> None:
        parts = [p for p in path.split("/") if p]
        if parts[:1] == ["api"]:
            self._route_api(handler, method, parts[1:], query)
            return
        if method == "GET" and self.ui_dir is not None:
            self._serve_static(handler, parts)
            return
        raise ApiError(404, "not_found", f"no such path {path!r}")

    def _route_api(self, handler, method: str, parts: list[str],
                   query: dict[str, list[str]]) -> None:
        if parts == ["palette"] and method == "GET":
            handler._send_json(200, [d.to_json_dict()
                                     for d in self.engine.palette.descriptors()])
        elif parts == ["flows"] and method == "GET":
            handler._send_json(200, self._flow_summaries())
        elif len(parts) == 2 and parts[0] == "flows":
            self._flow_endpoint(handler, method, parts[1])
        elif len(parts) == 3 and parts[0] == "flows" and parts[2] == "deploy":
            self._deploy_endpoint(handler, method, parts[1], query)
        elif parts == ["events"] and method == "GET":
            self._serve_events(handler)
        elif parts == ["simulate"] and method == "POST":
            self._simulate_endpoint(handler)
        else:
            raise ApiError(404, "not_found",
                           f"no such endpoint {method} /api/{'/'.join(parts)}")

    def _flow_summaries(self) -> list[dict[str, Any]]:
        summaries = []
        for flow_id in self.store.flow_ids():
            document = self.store.load(flow_id)
            graph = parse_flow(document)
            summaries.append({
                "id": graph.id,
                "label": graph.label,
                "nodes": len(graph.nodes),
                "deployed": self.engine.get(flow_id) is not None,
            })
        return summaries

    def _flow_endpoint(self, handler, method: str, flow_id: str) -> None:
        if method == "GET":
            document = self.store.load(flow_id)
            if document is None:
                raise ApiError(404, "not_found", f"no flow {flow_id!r}")
            handler._send_json(200, None, raw_text=document)
        elif method == "PUT":
            body = handler._read_body()
            try:
                graph = parse_flow(body)
            except MalformedDocument as exc:
                raise ApiError(400, "malformed", str(exc)) from exc
            if graph.id != flow_id:
                raise ApiError(409, "conflict",
                               f"document id {graph.id!r} does not match "
                               f"path id {flow_id!r}")
            issues = validate_flow(graph, self.engine.palette)
            if issues:
                raise ApiError(422, "validation_failed",
                               "flow failed validation",
                               report=[{"severity": i.severity,
                                        "nodeId": i.node_id,
                                        "message": i.message} for i in issues])
            document = self.store.save(graph)
            handler._send_json(200, None, raw_text=document)
        else:
            raise ApiError(404, "not_found", f"unsupported method {method}")

    def _deploy_endpoint(self, handler, method: str, flow_id: str,
                         query: dict[str, list[str]]) -> None:
        if method == "POST":
            document = self.store.load(flow_id)
            if document is None:
                raise ApiError(404, "not_found", f"no flow {flow_id!r}")
            force = query.get("force", ["false"])[0].lower() == "true"
            with self._lock:
                live = self.engine.get(flow_id)
                if (live is not None and not force
                        and self._deployed_docs.get(flow_id) != document):
                    raise ApiError(409, "conflict",
                                   f"flow {flow_id!r} is deployed at another "
                                   f"revision; pass ?force=true to replace it")
            graph = parse_flow(document)
            try:
                deployment = self.engine.deploy(graph)
            except DeployError as exc:
                raise ApiError(422, "validation_failed", str(exc)) from exc
            with self._lock:
                self._deployed_docs[flow_id] = document
            handler._send_json(200, {
                "flowId": flow_id,
                "state": deployment.state,
                "subscriptions": len(deployment.subscriptions),
            })
        elif method == "DELETE":
            deployment = self.engine.get(flow_id)
            if deployment is None:
                raise ApiError(404, "not_deployed",
                               f"flow {flow_id!r} is not deployed")
            deployment.stop()
            with self._lock:
                self._deployed_docs.pop(flow_id, None)
            handler._send_json(200, {"flowId": flow_id, "state": "Stopped"})
        else:
            raise ApiError(404, "not_found", f"unsupported method {method}")

    def _simulate_endpoint(self, handler) -> None:
        body = handler._read_body()
        try:
            scenario = parse_scenario(body)
        except MalformedDocument as exc:
            raise ApiError(400, "malformed", str(exc)) from exc
        if any(e.kind == "quake" for e in scenario.events) and self._feed_server is None:
            raise ApiError(422, "validation_failed",
                           "this server polls an external earthquake feed; "
                           "quake scenario events are unavailable")
        try:
            report = run_scenario(scenario, self.engine.broker,
                                  self._feed_server, time_scale=0.0,
                                  clock=self.engine.clock)
        except UnknownSensorInScenario as exc:
            raise ApiError(422, "validation_failed", str(exc)) from exc
        handler._send_json(200, {
            "events": report.events,
            "publications": report.publications,
            "counts": report.counts,
        })

    # -- server-sent events -------------------------------------------------

    def _broadcast_event(self, event: DebugEvent) -> None:
        for q in list(self._sse_clients):
            q.put(event)

    def _serve_events(self, handler) -> None:
        q: queue.Queue = queue.Queue()
        self._sse_clients.append(q)
        try:
            handler.send_response(200)
            handler.send_header("Content-Type", "text/event-stream")
            handler.send_header("Cache-Control", "no-cache")
            handler._cors()
            handler.end_headers()
            handler.wfile.write(b": connected\n\n")
            handler.wfile.flush()
            while not self._closing:
                try:
                    event = q.get(timeout=0.5)
                except queue.Empty:
                    continue
                if event is None:
                    break
                data = json.dumps(event.to_json_dict())
                handler.wfile.write(f"data: {data}\n\n".encode("utf-8"))
                handler.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self._sse_clients.remove(q)

    # -- static UI ----------------------------------------------------------

    def _serve_static(self, handler, parts: list[str]) -> None:
        relative = Path(*parts) if parts else Path("index.html")
        target = (self.ui_dir / relative).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            raise ApiError(404, "not_found", f"no such file {'/'.join(parts)!r}")
        content_type = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        body = target.read_bytes()
        handler.send_response(200)
        handler.send_header("Content-Type", content_type)
        handler.send_header("Content-Length", str(len(body)))
        handler._cors()
        handler.end_headers()
        handler.wfile.write(body)
