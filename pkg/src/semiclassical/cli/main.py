"""Entry point: parse arguments, load the config, dispatch and map outcomes to exit codes.

Exit codes: 0 success, 1 partial failures (see the manifest), 2 config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import ConfigError
from .checks import run_check
from .config import MODES, load_config
from .runs import run_converge, run_eigfn, run_spectrum

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

RUNNERS = {"spectrum": run_spectrum, "converge": run_converge, "eigfn": run_eigfn,
           "check": run_check}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semiclassical",
                                     description="EBK quantization runs with oracle comparison.")
    parser.add_argument("command", choices=MODES)
    parser.add_argument("--config", required=True, type=Path, help="TOML run configuration")
    parser.add_argument("--out", type=Path, default=None, help="output directory (overrides config)")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        # the subcommand decides what runs; the config's mode only feeds validation
        cfg = load_config(args.config, mode=args.command)
        out = args.out if args.out is not None else Path(cfg.out)
        report = RUNNERS[args.command](cfg, out, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in report.failures:
        print(f"failure: {f}", file=sys.stderr)
    print(f"{args.command}: wrote {len(report.files)} file(s) to {out}; "
          f"{len(report.failures)} failure(s)")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
