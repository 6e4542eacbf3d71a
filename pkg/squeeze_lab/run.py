#!/usr/bin/env python
"""
Command line interface for squeeze-lab
"""

import argparse
import logging
import sys

from squeeze_lab.config import COMMANDS, LOG_FILE, LOG_LEVEL, RunConfig, parse_config_file
from squeeze_lab.exceptions import SqueezeLabError
from squeeze_lab.main import run_command


def parse_args(argv=None):
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(
        description="squeeze-lab - Ponderomotive squeezing with dispersive and dissipative coupling"
    )

    parser.add_argument("command", choices=COMMANDS, help="Computation to run")

    parser.add_argument("--config", help="Run configuration file (section.key = value lines)")

    parser.add_argument("--out", help="Output directory")

    parser.add_argument(
        "--method",
        choices=["exact", "closed"],
        help="Spectrum method: exact linear solve or the closed form of the coupling regime",
    )

    parser.add_argument("--format", choices=["csv", "json"], help="Output table format")

    parser.add_argument("--seed", type=int, help="Seed for randomized checks")

    parser.add_argument("--workers", type=int, help="Worker processes for grid evaluations")

    parser.add_argument("--verbose", action="store_true", help="Enable verbose logging")

    return parser.parse_args(argv)


def build_config(args) -> RunConfig:
    """Config file (or defaults) with command line flags applied on top"""
    config = parse_config_file(args.config) if args.config else RunConfig()
    run = {"command": args.command}
    if args.method is not None:
        run["method"] = args.method
    if args.seed is not None:
        run["seed"] = args.seed
    if args.workers is not None:
        run["workers"] = args.workers
    output = {}
    if args.out is not None:
        output["directory"] = args.out
    if args.format is not None:
        output["format"] = args.format
    return config.with_overrides(run=run, output=output)


def main(argv=None):
    """Main entry point for the command line interface"""
    args = parse_args(argv)

    # Configure logging
    log_level = logging.DEBUG if args.verbose else getattr(logging, LOG_LEVEL, logging.INFO)
    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(LOG_FILE),
            logging.StreamHandler(sys.stdout)
        ]
    )

    logger = logging.getLogger(__name__)

    try:
        config = build_config(args)
    except SqueezeLabError as e:
        logger.error(f"Configuration error: {e}")
        sys.exit(e.exit_code)

    sys.exit(run_command(args.command, config))


if __name__ == "__main__":
    main()
