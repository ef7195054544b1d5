"""Command-line entry point: ``poissonpath run|stage|validate-config``.

Exit codes: 0 success, 2 configuration or input error, 3 computation error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import InvalidConfigError, MissingArtifactError, ParseError, ToolpathError
from .config import JobConfig, config_from_dict, load_config
from .pipeline import STAGES, run_stages

logger = logging.getLogger("poissonpath")

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poissonpath", description="Scalar-field CNC finishing tool paths.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="JSON job configuration")
        p.add_argument("-o", "--output", help="output directory (overrides config)")
        p.add_argument("--h", type=float, dest="h", help="scallop height in mm")
        p.add_argument("--seed", type=int)
        p.add_argument("--variant", choices=["poisson", "smooth", "direction_only", "isoscallop_hard"])
        p.add_argument("--segmentation", help="'auto', 'off' or a patch count")

    run = sub.add_parser("run", help="run the whole pipeline")
    add_common(run)
    stage = sub.add_parser("stage", help="run one pipeline stage on existing artifacts")
    stage.add_argument("stage", choices=STAGES)
    add_common(stage)
    stage.add_argument("--compare", action="append", default=[], help="extra paths.json to compare (analyze)")
    check = sub.add_parser("validate-config", help="check a configuration file and exit")
    check.add_argument("config")
    return parser


def _overrides(args) -> dict:
    seg = args.segmentation
    if seg is not None and seg not in ("auto", "off"):
        try:
            seg = int(seg)
        except ValueError:
            raise InvalidConfigError(f"bad segmentation value {seg!r}") from None
    return {"output": args.output, "h": args.h, "seed": args.seed, "variant": args.variant, "segmentation": seg}


def cmd_run(config, stages=STAGES, compare=()) -> int:
    """Run the pipeline for a :class:`JobConfig` or raw mapping; returns the
    exit status."""
    try:
        cfg = config if isinstance(config, JobConfig) else config_from_dict(config)
    except InvalidConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    try:
        run_stages(cfg, stages, compare=compare)
    except (MissingArtifactError, ParseError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except ToolpathError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_COMPUTE
    return EXIT_OK


def cmd_stage(name, config, compare=()) -> int:
    return cmd_run(config, (name,), compare)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "validate-config":
            load_config(args.config)
            print("config ok")
            return EXIT_OK
        cfg = load_config(args.config, _overrides(args))
    except InvalidConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    if args.command == "run":
        return cmd_run(cfg)
    return cmd_stage(args.stage, cfg, args.compare)


if __name__ == "__main__":
    sys.exit(main())
