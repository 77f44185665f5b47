"""Command line entry points.

    tracesim run --config machine.json --warmup N --simulate M \
        [--json report.json] [--seed S] TRACE...

    tracesim tracegen --pattern P --length N --seed S --out FILE[.gz|.xz] \
        [--stride B] [--body K] [--taken-rate R]

``run`` takes exactly one trace per configured core, statically assigned
in order.  Exit codes: 0 success, 1 corrupt trace or runtime failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config, parse_config
from .core import file_cursor
from .errors import ConfigError, CorruptTraceError, TraceSimError
from .machine import Machine
from .metrics import render_text, report_to_json
from .traceio import PATTERNS, SyntheticSpec, generate_synthetic_trace, write_trace


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracesim",
        description="trace-driven cycle-level multicore simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate traces on a configured machine")
    run.add_argument("--config", metavar="FILE",
                     help="JSON machine description (defaults apply if omitted)")
    run.add_argument("--warmup", type=int, default=0, metavar="N",
                     help="instructions per core to warm up (default 0)")
    run.add_argument("--simulate", type=int, required=True, metavar="M",
                     help="instructions per core to measure")
    run.add_argument("--json", metavar="FILE", help="write the report as JSON")
    run.add_argument("--seed", type=int, metavar="S",
                     help="override the configured vm_seed")
    run.add_argument("traces", nargs="+", metavar="TRACE",
                     help="one trace file per core")

    gen = sub.add_parser("tracegen", help="generate a synthetic trace")
    gen.add_argument("--pattern", required=True, choices=PATTERNS)
    gen.add_argument("--length", type=int, required=True,
                     help="number of instructions")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, metavar="FILE",
                     help="output path; .gz or .xz selects compression")
    gen.add_argument("--stride", type=int, default=64, help="bytes between loads")
    gen.add_argument("--body", type=int, default=0,
                     help="filler instructions between loads or branches")
    gen.add_argument("--taken-rate", type=float, default=1.0,
                     help="loop-branch taken probability")
    gen.add_argument("--addr-base", type=lambda v: int(v, 0), default=0x10000000)
    gen.add_argument("--addr-range", type=lambda v: int(v, 0), default=1 << 24)
    gen.add_argument("--code-window", type=lambda v: int(v, 0), default=4096)
    return parser


def _cmd_run(args) -> int:
    if args.warmup < 0 or args.simulate < 0:
        print("error: --warmup and --simulate must be >= 0", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config) if args.config else parse_config("{}")
        if len(args.traces) != cfg.num_cores:
            print(
                f"error: config has {cfg.num_cores} core(s) but "
                f"{len(args.traces)} trace(s) were given",
                file=sys.stderr,
            )
            return 2
        machine = Machine(cfg, vm_seed=args.seed)
        machine.attach_cursors([file_cursor(path) for path in args.traces])
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CorruptTraceError as exc:
        print(f"error: corrupt trace: {exc}", file=sys.stderr)
        return 1

    try:
        report = machine.run(args.warmup, args.simulate)
    except CorruptTraceError as exc:
        print(f"error: corrupt trace: {exc}", file=sys.stderr)
        return 1
    except TraceSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    sys.stdout.write(render_text(report))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            f.write(report_to_json(report))
    return 0


def _cmd_tracegen(args) -> int:
    spec = SyntheticSpec(
        pattern=args.pattern,
        length=args.length,
        seed=args.seed,
        stride=args.stride,
        body=args.body,
        taken_rate=args.taken_rate,
        addr_base=args.addr_base,
        addr_range=args.addr_range,
        code_window=args.code_window,
    )
    try:
        count = write_trace(args.out, generate_synthetic_trace(spec))
    except TraceSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} records to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_tracegen(args)


if __name__ == "__main__":
    sys.exit(main())
