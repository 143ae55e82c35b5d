"""Operator command line: validate, run, serve, simulate.

Exit codes follow shell conventions: 0 success, 1 validation/deploy
problems, 2 unreadable or malformed inputs, 130 after an interrupt.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import default_palette
from .clock import RealClock, VirtualClock
from .engine import DebugEvent, Engine
from .errors import DeployError, MalformedDocument, SeismoflowError
from .model import parse_flow, validate_flow
from .registry import SensorRegistry, load_registry
from .server import DEFAULT_PORT, FlowStore, SeismoflowServer
from .simulator import ScriptedFeedServer, load_scenario, run_scenario
from .transport import ENV_FEED_URL, BrokerProfile, InMemoryBroker

EXIT_OK = 0
EXIT_ISSUES = 1
EXIT_MALFORMED = 2
EXIT_INTERRUPT = 130


def _read_flow(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_MALFORMED)
    try:
        return parse_flow(text)
    except MalformedDocument as exc:
        print(f"malformed flow document: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_MALFORMED)


def _print_debug_event(event: DebugEvent) -> None:
    if event.kind == "debug":
        print(f"DEBUG node={event.node_id} payload={json.dumps(event.payload)}")
    elif event.kind == "diagnostic":
        print(f"DIAG node={event.node_id} {event.text}")
    # notify confirmations are visible as the console channel's NOTIFY line


def cmd_validate(args) -> int:
    graph = _read_flow(args.flow)
    issues = validate_flow(graph, default_palette())
    for issue in issues:
        print(issue)
    return EXIT_OK if not issues else EXIT_ISSUES


def cmd_run(args) -> int:
    graph = _read_flow(args.flow)

    scenario = None
    if args.scenario:
        try:
            scenario = load_scenario(args.scenario)
        except (OSError, MalformedDocument) as exc:
            print(f"cannot load scenario: {exc}", file=sys.stderr)
            return EXIT_MALFORMED

    if args.registry:
        try:
            registry = load_registry(args.registry)
        except (OSError, MalformedDocument) as exc:
            print(f"cannot load registry: {exc}", file=sys.stderr)
            return EXIT_MALFORMED
    elif scenario is not None:
        registry = SensorRegistry(list(scenario.sensors))
    else:
        registry = SensorRegistry()

    virtual = args.time_scale == 0
    clock = VirtualClock() if virtual else RealClock()

    profile = BrokerProfile.from_env()
    if profile is not None:
        from .mqtt_adapter import ExternalBroker

        broker = ExternalBroker(profile, clock)
        broker.connect()
    else:
        broker = InMemoryBroker(clock=clock)

    feed_server = None
    feed_url = os.environ.get(ENV_FEED_URL) or None
    if scenario is not None and any(e.kind == "quake" for e in scenario.events):
        feed_server = ScriptedFeedServer(clock)
        feed_url = feed_server.url

    audit_file = None
    audit = None
    if args.audit_log:
        audit_file = open(args.audit_log, "w", encoding="utf-8")
        audit = lambda record: audit_file.write(record.audit_line() + "\n")

    engine = Engine(broker, default_palette(), registry, clock,
                    feed_url=feed_url, feed_poll_ms=args.feed_poll_ms,
                    audit=audit)
    engine.add_debug_listener(_print_debug_event)

    exit_code = EXIT_OK
    deployment = None
    try:
        try:
            deployment = engine.deploy(graph)
        except DeployError as exc:
            print(f"deploy failed: {exc}", file=sys.stderr)
            return EXIT_ISSUES

        if scenario is not None:
            run_scenario(scenario, broker, feed_server,
                         time_scale=args.time_scale, clock=clock)
        if args.duration is not None:
            if virtual:
                clock.advance(int(args.duration * 1000))
            else:
                time.sleep(args.duration)
        elif scenario is None:
            print("running; press Ctrl-C to stop", file=sys.stderr)
            while True:
                time.sleep(1)
    except KeyboardInterrupt:
        exit_code = EXIT_INTERRUPT
    finally:
        if deployment is not None:
            deployment.stop()
        if feed_server is not None:
            feed_server.close()
        if audit_file is not None:
            audit_file.close()
    return exit_code


def cmd_serve(args) -> int:
    clock = VirtualClock() if args.virtual_clock else RealClock()
    broker = InMemoryBroker(clock=clock)
    registry = SensorRegistry()
    if args.registry:
        try:
            registry = load_registry(args.registry)
        except (OSError, MalformedDocument) as exc:
            print(f"cannot load registry: {exc}", file=sys.stderr)
            return EXIT_MALFORMED
    data_dir = args.data_dir or os.environ.get("SEISMOFLOW_DATA_DIR",
                                               "./seismoflow-data")
    engine = Engine(broker, default_palette(), registry, clock,
                    feed_url=os.environ.get(ENV_FEED_URL) or None)
    server = SeismoflowServer(engine, FlowStore(data_dir),
                              host=args.host, port=args.port,
                              ui_dir=args.ui_dir)
    print(f"serving on {server.url} (data dir: {data_dir})", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.close()
        return EXIT_INTERRUPT
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (OSError, MalformedDocument) as exc:
        print(f"cannot load scenario: {exc}", file=sys.stderr)
        return EXIT_MALFORMED

    virtual = args.time_scale == 0
    clock = VirtualClock() if virtual else RealClock()
    profile = BrokerProfile.from_env()
    if profile is not None:
        from .mqtt_adapter import ExternalBroker

        broker = ExternalBroker(profile, clock)
        broker.connect()
    else:
        broker = InMemoryBroker(clock=clock)
        print("no external broker configured; publishing in-memory",
              file=sys.stderr)
    feed_server = None
    if any(e.kind == "quake" for e in scenario.events):
        feed_server = ScriptedFeedServer(clock)
        print(f"scripted earthquake feed at {feed_server.url}", file=sys.stderr)
    try:
        report = run_scenario(scenario, broker, feed_server,
                              time_scale=args.time_scale, clock=clock)
    except SeismoflowError as exc:
        print(f"scenario failed: {exc}", file=sys.stderr)
        return EXIT_ISSUES
    finally:
        if feed_server is not None:
            feed_server.close()
    print(json.dumps({"events": report.events,
                      "publications": report.publications,
                      "counts": report.counts}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seismoflow",
        description="Flow-based automation over an earthquake sensor fleet.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="validate a flow document")
    p_validate.add_argument("flow", help="path to a .flow.json file")
    p_validate.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="deploy a flow and run it headlessly")
    p_run.add_argument("flow", help="path to a .flow.json file")
    p_run.add_argument("--registry", help="sensor registry JSON file")
    p_run.add_argument("--scenario", help="scenario file to play")
    p_run.add_argument("--time-scale", type=float, default=0.0,
                       help="0 = virtual time (default), 1 = real time")
    p_run.add_argument("--audit-log", help="write routing records to this file")
    p_run.add_argument("--duration", type=float,
                       help="seconds to keep running after the scenario")
    p_run.add_argument("--feed-poll-ms", type=int, default=5000,
                       help="deployment-level earthquake feed poll interval")
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="serve the editor HTTP API")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=DEFAULT_PORT)
    p_serve.add_argument("--data-dir", help="flow storage directory")
    p_serve.add_argument("--registry", help="sensor registry JSON file")
    p_serve.add_argument("--ui-dir", help="serve this directory at / (editor build)")
    p_serve.add_argument("--virtual-clock", action="store_true",
                         help="drive time from simulate calls only")
    p_serve.set_defaults(func=cmd_serve)

    p_sim = sub.add_parser("simulate", help="play a scenario against the broker")
    p_sim.add_argument("scenario", help="path to a .scenario.json file")
    p_sim.add_argument("--time-scale", type=float, default=0.0)
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv: "list[str] | None" = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
