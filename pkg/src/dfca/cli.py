"""Command-line front end.

    dfca run <config> [--set key=value ...]
    dfca sweep <config> --key K --values v1,v2,...
    dfca verify [--inject-fault]

Set ``DFCA_OUTPUT_ROOT`` to redirect all outputs.
"""

from __future__ import annotations

import argparse
import sys

from .harness import cmd_run, cmd_sweep
from .verify import run_verification


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfca", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run n_seeds experiments from a config file")
    run.add_argument("config", help="path to a key=value config file")
    run.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )

    sweep = sub.add_parser("sweep", help="repeat a run over values of one numeric key")
    sweep.add_argument("config", help="path to a key=value config file")
    sweep.add_argument("--key", required=True, help="numeric config key to sweep")
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )

    verify = sub.add_parser("verify", help="run the algorithmic property suite")
    verify.add_argument(
        "--inject-fault",
        action="store_true",
        help="deliberately corrupt the running-average weights (self-test of the checks)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.overrides)
    if args.command == "sweep":
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        return cmd_sweep(args.config, args.key, values, args.overrides)
    return run_verification(inject_fault=args.inject_fault)


if __name__ == "__main__":
    sys.exit(main())
