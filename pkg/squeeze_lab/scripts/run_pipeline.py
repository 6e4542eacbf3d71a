#!/usr/bin/env python
"""
Run every bundled configuration in squeeze_lab/data
"""

import os
import sys
import logging

# Add the parent directory to the path so we can import the squeeze_lab package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from squeeze_lab.config import DATA_DIR, OUTPUT_DIR, parse_config_file
from squeeze_lab.exceptions import SqueezeLabError
from squeeze_lab.main import run_command

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(sys.stdout)
    ]
)

logger = logging.getLogger(__name__)


def run_all(data_dir=DATA_DIR, out_dir=OUTPUT_DIR):
    """
    Run each *.cfg file with the command named in its run.command key.

    Returns:
        dict: config file name -> exit code
    """
    results = {}
    for path in sorted(data_dir.glob("*.cfg")):
        try:
            config = parse_config_file(path)
        except SqueezeLabError as e:
            logger.error(f"Skipping {path.name}: {e}")
            results[path.name] = e.exit_code
            continue
        if config.run.command is None:
            logger.warning(f"Skipping {path.name}: no run.command")
            continue
        config = config.with_overrides(output={"prefix": config.output.prefix or path.stem})
        results[path.name] = run_command(config.run.command, config, out_dir)
    return results


def main():
    """Run the bundled configurations"""
    logger.info("Running bundled squeeze-lab configurations...")

    results = run_all()
    failed = [name for name, code in results.items() if code != 0]

    if failed:
        logger.error(f"{len(failed)} of {len(results)} configurations failed: {', '.join(failed)}")
        sys.exit(1)
    logger.info(f"All {len(results)} configurations completed successfully!")


if __name__ == "__main__":
    main()
