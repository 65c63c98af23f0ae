"""Command line entry point: ``mapt solve``."""
from __future__ import annotations

import argparse
import logging
import sys

from .driver import METHODS, RunConfig, run
from .io import FormatError, emit_trace, read_model
from .sac import DMAX_INIT, EPS_INIT

EXIT_OK, EXIT_PARSE, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("mapt")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapt", description="LP-relaxation bounds with triplet tightening")
    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", help="run dual ascent with optional tightening")
    solve.add_argument("--input", required=True, help="model file")
    solve.add_argument("--format", choices=("native", "uai"), default="native")
    solve.add_argument("--method", choices=METHODS, default="sac")
    solve.add_argument("--time-limit", type=float, default=300.0, help="seconds (default: 300)")
    solve.add_argument("--stage-passes", type=int, default=100,
                       help="ascent passes after each tightening stage (default: 100)")
    solve.add_argument("--eps", type=float, default=EPS_INIT)
    solve.add_argument("--dmax", type=int, default=DMAX_INIT)
    solve.add_argument("--trace", help="write the bound trace as CSV")
    solve.add_argument("--certify", action="store_true",
                       help="verify one tightening certificate per SAC stage")
    solve.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config = RunConfig(method=args.method, time_limit=args.time_limit,
                       stage_passes=args.stage_passes, eps0=args.eps, dmax0=args.dmax,
                       input=args.input, format=args.format, trace_out=args.trace,
                       certify=args.certify)
    try:
        config.validate()
    except ValueError as exc:
        print(f"mapt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        model = read_model(config.input, config.format)
    except (FormatError, OSError) as exc:
        print(f"mapt: cannot read {config.input}: {exc}", file=sys.stderr)
        return EXIT_PARSE

    log.debug("loaded %r", model)
    trace, model = run(config, model)
    for row in trace.rows:
        print(f"stage {row.stage:3d}  t={row.seconds:8.3f}s  bound={row.bound:.9g}  "
              f"triplets={row.triplets}  eps={row.eps:.3g}  dmax={row.dmax}")
    for line in trace.certificates:
        print(line)
    print(f"final bound {trace.final_bound:.9g}")
    if config.trace_out:
        emit_trace(trace, config.trace_out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
