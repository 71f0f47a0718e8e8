"""Command-line entry point for the frictional hedging experiments."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from runner.commands import COMMANDS, Options
from runner.config import settings
from runner.validation import apply_overrides, load_config, read_raw, validate
from shared.errors import ConfigError, HedgingError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frictional-hedging",
        description="Optimal hedging with transaction costs on trading rates",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="Override evaluation.seed")
    common.add_argument("--workers", type=int, default=None, help="Evaluation worker processes")
    common.add_argument("--out", type=Path, default=None, help="Output directory")
    common.add_argument("--paper-scale", action="store_true", help="Apply the config's paper_scale overrides")

    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        command = sub.add_parser(name, parents=[common], help=COMMANDS[name].__doc__.splitlines()[0])
        if name == "compare":
            command.add_argument("--horizons", type=float, nargs="+", default=None, help="Horizons for a gap series")
        if name == "export-paths":
            command.add_argument("--n-paths", type=int, default=None, help="Paths behind the profile quantiles")
    sub.add_parser("validate", parents=[common], help="Check a configuration and list violations")
    return parser


def resolve_options(args: argparse.Namespace, config_name: str, out_dir: Optional[str]) -> Options:
    """Flags win over the config's output section, which wins over settings."""
    out = args.out or Path(out_dir or settings.runner_out_dir) / config_name
    options = Options(
        out=Path(out),
        workers=args.workers or settings.runner_workers,
        block_size=settings.runner_block_size,
        horizons=list(getattr(args, "horizons", None) or []),
    )
    if getattr(args, "n_paths", None):
        options.profile_paths = args.n_paths
    return options


def _validate(path: Path) -> int:
    try:
        violations = validate(read_raw(path))
    except ConfigError as exc:
        violations = exc.violations
    if violations:
        for violation in violations:
            print(violation)
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return _validate(args.config)

    try:
        config = apply_overrides(load_config(args.config), seed=args.seed, paper_scale=args.paper_scale)
        options = resolve_options(args, config.name, config.output.dir)
        options.out.mkdir(parents=True, exist_ok=True)
        (options.out / "config.json").write_text(
            json.dumps(config.model_dump(by_alias=True, mode="json"), indent=2), encoding="utf-8"
        )
        logger.info(f"Running {args.command} for {config.name!r}, output in {options.out}")
        status = COMMANDS[args.command](config, options)
    except ConfigError as exc:
        logger.error(f"Invalid configuration: {exc}")
        return EXIT_CONFIG
    except (HedgingError, ValueError, FileNotFoundError) as exc:
        logger.error(f"{args.command} aborted: {exc}", exc_info=True)
        return EXIT_FAILED
    logger.info(f"{args.command} finished with status {status}")
    return status


if __name__ == "__main__":
    sys.exit(main())
