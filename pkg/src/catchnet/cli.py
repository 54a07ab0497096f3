"""Command-line entry points.

  simulate   run a scenario deterministically and write store + report
  report     recompute the report from a persisted store directory
  serve      serve the cloud API (optionally feeding it from a live sim)
  plan       duty-cycle current and battery lifetime arithmetic
  calibrate  fit cheap-vs-reference series exported from the series API
  inject     schedule a node fault into a live served simulation

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import threading
import urllib.error
import urllib.request

from .analysis import FitError, average_current, battery_life, fit_calibration
from .cloudcore import CloudConfig, CloudCore
from .fieldnode import DutyCycle, PowerProfile
from .httpapi import CloudApiServer, LiveControl
from .report import ReportError, build_report, render_report
from .runner import Deployment
from .scenario import ScenarioError, load_scenario
from .wire import decode_points

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def parse_duration(text: str) -> float:
    """Accept plain seconds or h/m/d suffixes: 300, 90m, 6h, 14d."""
    units = {"s": 1, "m": 60, "h": 3600, "d": 86_400}
    if text and text[-1] in units:
        return float(text[:-1]) * units[text[-1]]
    return float(text)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        for line in exc.diagnostics:
            print(f"scenario: {line}", file=sys.stderr)
        return EXIT_VALIDATION
    except ReportError as exc:
        print(f"store: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (FitError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catchnet")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario deterministically")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--until", default=None, help="override duration (300, 90m, 6h, 14d)")
    p.add_argument("--store", required=True, help="store directory for journals and report")
    p.add_argument("--report", default=None, help="report path (default <store>/report.txt)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="recompute the report from a store directory")
    p.add_argument("--store", required=True)
    p.add_argument("--out", default=None, help="write the report here as well")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve the cloud API")
    p.add_argument("--store", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--scenario", default=None, help="feed the store from a live simulation")
    p.add_argument("--compression", type=float, default=None,
                   help="sim seconds per wall second for the live feed")
    p.add_argument("--ui-dir", default=None, help="serve console assets from this directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("plan", help="lifetime arithmetic")
    p.add_argument("--capacity", type=float, required=True, help="mAh")
    p.add_argument("--active-ma", type=float, default=130.0)
    p.add_argument("--sleep-ma", type=float, default=45.0)
    p.add_argument("--awake-s", type=float, default=5.0)
    p.add_argument("--sleep-s", type=float, default=300.0)
    p.add_argument("--derating", type=float, default=0.7)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("calibrate", help="fit reference = slope*cheap + intercept")
    p.add_argument("--cheap", required=True, help="point-lines file (series export)")
    p.add_argument("--ref", required=True)
    p.add_argument("--tolerance-s", type=float, default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("inject", help="schedule a fault in a live served sim")
    p.add_argument("--url", default="http://127.0.0.1:8080")
    p.add_argument("--at", type=float, required=True)
    p.add_argument("--node", required=True)
    p.add_argument("--fault", required=True)
    p.add_argument("--param", action="append", default=[],
                   help="extra fault parameter as key=value", metavar="K=V")
    p.set_defaults(func=cmd_inject)

    return parser


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.until is not None:
        scenario.duration_s = parse_duration(args.until)
    dep = Deployment(scenario, args.store, seed=args.seed)
    dep.run()
    report = build_report(args.store)
    text = render_report(report)
    report_path = args.report or os.path.join(args.store, "report.txt")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    violations = report.violations()
    for v in violations:
        print(f"INVARIANT VIOLATED: {v}", file=sys.stderr)
    return EXIT_VALIDATION if violations else EXIT_OK


def cmd_report(args) -> int:
    report = build_report(args.store)
    text = render_report(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    violations = report.violations()
    for v in violations:
        print(f"INVARIANT VIOLATED: {v}", file=sys.stderr)
    return EXIT_VALIDATION if violations else EXIT_OK


def cmd_serve(args) -> int:
    os.makedirs(args.store, exist_ok=True)
    cloud_log = os.path.join(args.store, "cloud.log")
    control = None
    dep = None
    if args.scenario:
        scenario = load_scenario(args.scenario)
        if args.compression is not None:
            scenario.time_compression = args.compression
        dep = Deployment(scenario, args.store)
        core = dep.cloud
        control = LiveControl()
    elif os.path.exists(cloud_log):
        core = CloudCore.from_log(cloud_log, CloudConfig())
        frozen = max((m["t"] for m in core.packet_meta.values()), default=0)
        core.clock = lambda: float(frozen)
    else:
        core = CloudCore(CloudConfig(), journal_path=cloud_log)

    try:
        server = CloudApiServer(core, host=args.host, port=args.port,
                                control=control, ui_dir=args.ui_dir)
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    stop = threading.Event()
    feeder = None
    if dep is not None:
        feeder = threading.Thread(
            target=dep.run_realtime,
            args=(dep.scenario.time_compression, stop, control),
            daemon=True,
        )
        feeder.start()
        print(f"feeding live simulation at x{dep.scenario.time_compression:g} compression")
    print(f"serving cloud API on http://{args.host}:{server.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        stop.set()
        server.httpd.server_close()
    return EXIT_OK


def cmd_plan(args) -> int:
    profile = PowerProfile(args.active_ma, args.sleep_ma)
    duty = DutyCycle(sleep_s=args.sleep_s, awake_s=args.awake_s)
    avg = average_current(profile, duty)
    hours = battery_life(args.capacity, avg, args.derating)
    print(f"avg_ma {avg:.2f}")
    print(f"hours {hours:.1f}")
    print(f"days {hours / 24:.1f}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cheap = _read_points(args.cheap)
    ref = _read_points(args.ref)
    fit = fit_calibration(cheap, ref, tolerance_s=args.tolerance_s)
    print(f"slope {fit.slope:.6f}")
    print(f"intercept {fit.intercept:.6f}")
    print(f"r_squared {fit.r_squared:.6f}")
    print(f"n_points {fit.n_points}")
    return EXIT_OK


def _read_points(path: str) -> list[tuple[float, float]]:
    with open(path, encoding="utf-8") as fh:
        pts = decode_points(fh.read())
    out = []
    for t, v in pts:
        if not isinstance(v, float):
            raise ValueError(f"{path}: non-numeric value {v!r}")
        out.append((t, v))
    return out


def cmd_inject(args) -> int:
    params = []
    for kv in args.param:
        if "=" not in kv:
            print(f"bad --param {kv!r}, need key=value", file=sys.stderr)
            return EXIT_VALIDATION
        k, v = kv.split("=", 1)
        params += [k, v]
    body = " ".join(["inject", str(args.at), args.node, args.fault] + params)
    req = urllib.request.Request(
        args.url.rstrip("/") + "/control/inject",
        data=body.encode("utf-8"),
        method="POST",
        headers={"Content-Type": "text/plain"},
    )
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            print(resp.read().decode("utf-8"), end="")
        return EXIT_OK
    except urllib.error.HTTPError as exc:
        print(exc.read().decode("utf-8"), file=sys.stderr, end="")
        return EXIT_VALIDATION
    except urllib.error.URLError as exc:
        print(f"cannot reach {args.url}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
