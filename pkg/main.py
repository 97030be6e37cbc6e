"""
Main application entry point.
Parses the command line, configures logging and dispatches to a pipeline command.

    python main.py gen-toy --set output_dir=runs/toy
    python main.py train --config runs/toy.cfg --set max_steps=2000
"""

import argparse
import logging
import sys
from typing import List, Optional

from app import __version__
from app.cli import COMMANDS, load_config, run_command
from app.errors import MolDiffusionError

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moldiff",
        description="Instruction-conditioned discrete graph diffusion for molecules",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    # Configure logging
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        config = load_config(args.config, args.overrides)
        run_command(args.command, config)
    except (MolDiffusionError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
