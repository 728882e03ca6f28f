"""Command line entry points.

  padfuse run --config daemon.json [--headless]
  padfuse replay session.jsonl --fast --emit csv --out trajectory.csv
  padfuse validate-config daemon.json
  padfuse bench --events 1000 --ticks 1000 [--broadcast-seconds 5]
"""

import argparse
import signal
import sys
import time
from pathlib import Path

from .bench import bench_broadcast_jitter, bench_ticks
from .config import ConfigError, load_config
from .control import ControlServer
from .daemon import AffectDaemon
from .session import (
    ConfigHashMismatch,
    SessionError,
    check_config_hash,
    read_session,
    replay_session,
)


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        for error in exc.errors:
            print(f"config error: {error}", file=sys.stderr)
        return 2
    for warning in config.warnings:
        print(f"config warning: {warning}", file=sys.stderr)

    static_root = None
    if not args.headless:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        if candidate.is_dir():
            static_root = candidate

    daemon = AffectDaemon(config)
    daemon.start()
    server = ControlServer(daemon, static_root=static_root)
    server.start()
    host, port = server.address
    print(f"control api on http://{host}:{port}  (ingest udp {daemon.ingest.address[1]})")
    if static_root:
        print(f"dashboard served from {static_root}")

    stopping = []

    def _stop(_sig, _frame):
        stopping.append(True)

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    try:
        while not stopping:
            time.sleep(0.2)
    finally:
        server.stop()
        drops = daemon.stop()
        dropped = {k: v for k, v in drops.items() if v}
        print(f"stopped; queue drops: {dropped or 'none'}")
    return 0


def _cmd_replay(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        for error in exc.errors:
            print(f"config error: {error}", file=sys.stderr)
        return 2
    try:
        header, records = read_session(args.log)
    except SessionError as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return 2
    try:
        check_config_hash(header, config, override=args.ignore_config_hash)
    except ConfigHashMismatch as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return 2

    speed = None if args.fast else args.speed
    if speed is not None and not speed > 0:
        print("replay error: --speed must be > 0", file=sys.stderr)
        return 2

    if speed is None:
        rows = replay_session(records, config)
    else:
        # paced mode: identical trajectory, gaps scaled by 1/speed
        rows = []
        start = time.monotonic()
        base = None

        def _pace(offset, msg):
            nonlocal base
            if base is None:
                base = offset
            due = start + (offset - base) / speed
            delay = due - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            rows.append((offset, msg))

        replay_session(records, config, on_result=_pace)

    out = Path(args.out) if args.out else Path(args.log).with_suffix(f".trajectory.{args.emit}")
    from . import report

    if args.emit == "csv":
        report.write_csv(out, rows)
    else:
        report.write_jsonl(out, rows)
    written = [str(out)]
    if not args.no_plot:
        written += [str(p) for p in report.render_figures(out, rows)]
    print(f"replayed {len(records)} records -> {len(rows)} fusion results")
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_validate(args) -> int:
    try:
        config = load_config(args.config_path)
    except ConfigError as exc:
        for error in exc.errors:
            print(f"invalid: {error}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    for warning in config.warnings:
        print(f"warning: {warning}")
    print(f"ok  config_hash={config.config_hash}")
    return 0


def _cmd_bench(args) -> int:
    stats = bench_ticks(events=args.events, ticks=args.ticks)
    print(
        f"tick latency over {stats['ticks']} ticks with {stats['events']} active events:"
    )
    print(
        f"  median {stats['median_ms']:.3f} ms   p95 {stats['p95_ms']:.3f} ms   "
        f"p99 {stats['p99_ms']:.3f} ms   max {stats['max_ms']:.3f} ms"
    )
    if args.broadcast_seconds > 0:
        jitter = bench_broadcast_jitter(seconds=args.broadcast_seconds, events=args.events)
        print(
            f"broadcast jitter over {jitter['sends']} sends at {jitter['period_ms']:.0f} ms period:"
        )
        print(
            f"  median {jitter['jitter_median_ms']:.3f} ms   p99 {jitter['jitter_p99_ms']:.3f} ms   "
            f"max {jitter['jitter_max_ms']:.3f} ms"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="padfuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="start the daemon")
    p_run.add_argument("--config", default=None, help="config file (json); defaults apply if omitted")
    p_run.add_argument("--headless", action="store_true", help="do not serve the dashboard bundle")
    p_run.set_defaults(fn=_cmd_run)

    p_replay = sub.add_parser("replay", help="replay a session log deterministically")
    p_replay.add_argument("log", help="session log (jsonl)")
    p_replay.add_argument("--config", default=None, help="config file; must match the log's hash")
    p_replay.add_argument("--speed", type=float, default=None, help="pace results at this multiple of real time")
    p_replay.add_argument("--fast", action="store_true", help="as fast as possible (virtual time); default")
    p_replay.add_argument("--emit", choices=("csv", "jsonl"), default="csv")
    p_replay.add_argument("--out", default=None, help="output path (default: alongside the log)")
    p_replay.add_argument("--no-plot", action="store_true", help="skip rendering trajectory figures")
    p_replay.add_argument(
        "--ignore-config-hash", action="store_true", help="replay despite a config hash mismatch"
    )
    p_replay.set_defaults(fn=_cmd_replay)

    p_validate = sub.add_parser("validate-config", help="validate a config file")
    p_validate.add_argument("config_path")
    p_validate.set_defaults(fn=_cmd_validate)

    p_bench = sub.add_parser("bench", help="measure tick latency and broadcast jitter")
    p_bench.add_argument("--events", type=int, default=1000)
    p_bench.add_argument("--ticks", type=int, default=1000)
    p_bench.add_argument("--broadcast-seconds", type=float, default=0.0)
    p_bench.set_defaults(fn=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
