"""
DRMPC - Core Utilities
Central configuration, logging, constants and the exception hierarchy.
"""

from src.core.config import settings, get_settings
from src.core.exceptions import DrmpcError, ConfigError
from src.core.logging import setup_logging, resolve_level

__all__ = [
    "settings",
    "get_settings",
    "DrmpcError",
    "ConfigError",
    "setup_logging",
    "resolve_level",
]
