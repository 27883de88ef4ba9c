"""
DRMPC - Command-Line Module
Scenario file schema and the drmpc command.
"""

from src.cli.config import CliConfig, load_config, parse_config
from src.cli.main import build_parser, main

__all__ = [
    # Scenario files
    "CliConfig",
    "load_config",
    "parse_config",
    # Command
    "build_parser",
    "main",
]
