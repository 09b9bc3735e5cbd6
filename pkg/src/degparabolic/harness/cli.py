"""Command line entry point.

Examples
--------
    degparabolic --list-catalog
    degparabolic solve --config remark14-gamma05 --out runs/r14
    degparabolic certify --config certificates --out runs/cert
    degparabolic suite --config my_config.json --seed 7 --out runs/cmp
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .catalog import describe_catalog
from .config import ExperimentConfig, presets
from .suites import StageError, run_experiment

log = logging.getLogger("degparabolic")

COMMAND_STAGES = {
    "solve": ["solve"],
    "fit": ["solve", "fit"],
    "certify": ["certify"],
    "suite": ["compare"],
    "converge": ["converge"],
}


def load_config(ref: str) -> ExperimentConfig:
    """A JSON file path, or the name of a built-in preset."""
    path = Path(ref)
    if path.is_file():
        return ExperimentConfig.load(path)
    table = presets()
    if ref in table:
        return table[ref]
    raise ValueError(f"config {ref!r} is neither a file nor a preset; presets: {sorted(table)}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="degparabolic", description=__doc__.splitlines()[0])
    parser.add_argument("--list-catalog", action="store_true",
                        help="print registered operators, problems, exact solutions and barriers")
    parser.add_argument("--list-presets", action="store_true", help="print built-in configs")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")
    for name in COMMAND_STAGES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path or preset name")
        p.add_argument("--out", default=None, help="output directory (default: config.output)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
        p.add_argument("--dump-config", action="store_true",
                       help="print the resolved config as JSON and exit")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.list_catalog or args.list_presets:
        if args.list_catalog:
            print(describe_catalog())
        if args.list_presets:
            print("\n".join(sorted(presets())))
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.validate()
    except (ValueError, TypeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.dump_config:
        print(cfg.to_json())
        return 0
    stages = COMMAND_STAGES[args.command]
    if args.command == "fit" and not cfg.analyses.fits:
        print("config error: no fits requested", file=sys.stderr)
        return 2
    if args.command == "solve":
        stages = ["solve"] + (["bounds"] if cfg.analyses.bounds else [])
    out = args.out if args.out is not None else cfg.output
    log.info("running %s with stages %s", cfg.name, stages)
    try:
        report = run_experiment(cfg, out, stages)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for check in report.checks:
        print(check.line())
    print(f"{'PASS' if report.passed else 'FAIL'}: {cfg.name} -> {out}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
