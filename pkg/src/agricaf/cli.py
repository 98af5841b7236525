"""Command-line entry point.

    agricaf <stage> --config <path> [--only-month M] [--only-horizon H]
            [--seed N] [--jobs K]

Stages run in order: validate, assemble, screen, forecast, explain, report.
Exit codes: 0 success, 2 validation failure, 3 partial cell failures,
4 prerequisite missing.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from agricaf import __version__
from agricaf.config import RunConfig
from agricaf.errors import AgricafError
from agricaf.pipeline import EXIT_VALIDATION, STAGES, run_stage


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agricaf",
        description="Analyse and forecast monthly agricultural commodity price changes.",
    )
    parser.add_argument("--version", action="version", version=f"agricaf {__version__}")
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGES + ("run",):
        sp = sub.add_parser(stage, help=f"run the {stage} stage" if stage != "run" else "run all stages in order")
        sp.add_argument("--config", required=True, help="path to the run configuration JSON")
        sp.add_argument("--only-month", type=int, default=None, metavar="M", help="restrict to one target month")
        sp.add_argument("--only-horizon", type=int, default=None, metavar="H", help="restrict to one horizon")
        sp.add_argument("--seed", type=int, default=None, metavar="N", help="override the configured seed")
        sp.add_argument("--jobs", type=int, default=1, metavar="K", help="parallel workers across cells")
        sp.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def _effective_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config)
    updates = {}
    if args.only_month is not None:
        if args.only_month not in config.months:
            raise AgricafError(f"--only-month {args.only_month} is not among configured months {list(config.months)}")
        updates["months"] = (args.only_month,)
    if args.only_horizon is not None:
        if args.only_horizon not in config.horizons:
            raise AgricafError(f"--only-horizon {args.only_horizon} is not among configured horizons {list(config.horizons)}")
        updates["horizons"] = (args.only_horizon,)
    if args.seed is not None:
        updates["seed"] = args.seed
    return dataclasses.replace(config, **updates) if updates else config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
    )
    try:
        config = _effective_config(args)
    except AgricafError as exc:
        logging.getLogger("agricaf.cli").error("%s", exc)
        return EXIT_VALIDATION

    stages = STAGES if args.stage == "run" else (args.stage,)
    code = 0
    for stage in stages:
        stage_code = run_stage(stage, config, jobs=args.jobs)
        code = stage_code if stage_code else code
        if stage_code not in (0, 3):
            return stage_code
    return code


if __name__ == "__main__":
    sys.exit(main())
