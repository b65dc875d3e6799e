"""``curvelab <command>``: run one command over a named scenario."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from curvelab.exceptions import ConfigError
from curvelab.runner.commands import COMMANDS
from curvelab.runner.config import validate
from curvelab.runner.scenarios import CATALOG, load_scenario_config, resolve

logger = logging.getLogger(__name__)


def _grid(value: str) -> tuple[int, int]:
    try:
        n_r, n_a = (int(x) for x in value.lower().split("x"))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Expected NxM, got {value!r}") from e
    return n_r, n_a


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvelab",
        description="Numerical checks for pseudoholomorphic spheres and their moduli.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, default=None, help="TOML run configuration.")
    parser.add_argument(
        "--scenario",
        choices=sorted(CATALOG),
        default=None,
        help="Catalog scenario; overrides [scenario].name in the config.",
    )
    parser.add_argument("--out", type=Path, default=Path("out"), help="Output directory.")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--grid", type=_grid, default=None, help="Domain grid as NxM.")
    parser.add_argument("--quick", action="store_true", help="Coarse grids and fewer samples.")
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_scenario_config(args.config, args.scenario)
        cfg = cfg.with_overrides(args.seed, args.grid, args.quick, args.workers)
        validate(cfg)
        scenario = resolve(cfg)
    except ConfigError as e:
        logger.error("%s", e)
        return 2
    logger.info("Running %s on %r", args.command, scenario)
    try:
        report = COMMANDS[args.command](scenario, args.out)
    except ConfigError as e:
        logger.error("%s", e)
        return 2
    failed = [c.name for c in report.checks if c.counts_as_failure]
    if failed:
        logger.error("Failed checks: %s", ", ".join(failed))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
