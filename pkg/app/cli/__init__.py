"""
Command-line surface: run configuration, datasets, toy corpus, manifests and commands.
"""

from app.cli.config import RunConfig, load_config
from app.cli.commands import COMMANDS, run_command

__all__ = ["COMMANDS", "RunConfig", "load_config", "run_command"]
