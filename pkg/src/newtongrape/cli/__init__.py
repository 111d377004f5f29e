"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 optimization failure or
failed derivative check, 3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .. import config as C
from .commands import (BLOCKS, EXIT_CONFIG, EXIT_FAILED, EXIT_IO, EXIT_OK, check_derivatives,
                       export, export_report, nominal_problem, run)
from .report import ReportFiles, fmt, load_bundle

__all__ = ["main", "run", "check_derivatives", "export", "export_report", "nominal_problem",
           "ReportFiles", "load_bundle", "resolve_config", "EXIT_OK", "EXIT_CONFIG",
           "EXIT_FAILED", "EXIT_IO"]


def resolve_config(name: str) -> C.RunConfig:
    """Load a config file, or a shipped template when ``name`` is a template name."""
    path = Path(name)
    if not path.exists() and name in C.TEMPLATES:
        return C.load_template(name)
    return C.load_config(path)


def _threads(value):
    if value is not None:
        return value
    env = os.environ.get("PULSE_THREADS")
    if env is None:
        return None
    try:
        n = int(env)
    except ValueError:
        raise C.ConfigError(f"PULSE_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise C.ConfigError("PULSE_THREADS must be positive")
    return n


def _positive_int(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def _nonnegative_int(text):
    n = int(text)
    if n < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="newtongrape",
                                     description="Newton-GRAPE pulse optimization for spin systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads for slice-level work (default: PULSE_THREADS or 1)")
    common.add_argument("--out-dir", default=None, help="directory for report files")

    p = sub.add_parser("run", parents=[common], help="optimize a pulse and write reports")
    p.add_argument("config", help="TOML config file or template name (" + ", ".join(C.TEMPLATES) + ")")
    p.add_argument("--seed", type=_nonnegative_int, default=None, help="override the config seed")

    p = sub.add_parser("check", parents=[common], help="compare derivatives with finite differences")
    p.add_argument("config")
    p.add_argument("--seed", type=_nonnegative_int, default=None)
    p.add_argument("--h", type=float, default=1e-5, help="five-point central-difference step (default 1e-5)")

    p = sub.add_parser("export", parents=[common], help="re-emit reports from a saved bundle")
    p.add_argument("bundle", help="bundle.npz written by 'run'")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        threads = _threads(args.threads)
        if args.command == "run":
            cfg = resolve_config(args.config)
            outcome = run(cfg, seed=args.seed, threads=threads, out_dir=args.out_dir)
            sys.stdout.write(outcome.files.summary.read_text())
            return outcome.exit_code
        if args.command == "check":
            if not args.h > 0:
                raise C.ConfigError("--h must be positive")
            cfg = resolve_config(args.config)
            errs, passed = check_derivatives(cfg, args.h, seed=args.seed, threads=threads)
            for block in BLOCKS:
                print(f"{block}: {fmt(errs[block])}")
            print("PASS" if passed else "FAIL")
            return EXIT_OK if passed else EXIT_FAILED
        files = export(args.bundle, args.out_dir, threads=threads)
        print(f"wrote {files.convergence.parent}")
        return EXIT_OK
    except C.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
