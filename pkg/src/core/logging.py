"""
DRMPC - Logging Configuration
One stdout handler on the package logger, shared by the library and the
command-line tools. Modules log through logging.getLogger(__name__).
"""

import logging
import sys
from typing import Optional, TextIO, Union

from src.core.config import settings
from src.core.exceptions import ConfigError

PACKAGE_LOGGER = "src"
LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s:%(lineno)d | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# loky workers and the numeric stack report at INFO on every pool start
QUIET_LOGGERS = ("joblib", "loky", "numexpr")


def resolve_level(level: Union[str, int, None]) -> int:
    """
    Numeric log level from a name ("debug", "INFO", ...) or a number.

    Raises:
        ConfigError: unknown level name
    """
    if level is None:
        level = settings.log_level
    if isinstance(level, int):
        return level
    value = logging.getLevelName(str(level).strip().upper())
    if not isinstance(value, int):
        raise ConfigError(f"unknown log level {level!r}")
    return value


def setup_logging(
    level: Union[str, int, None] = None,
    stream: Optional[TextIO] = None,
) -> logging.Logger:
    """
    Attach the DRMPC handler to the package logger and return it.

    Calling it again replaces the handler instead of stacking a second one,
    so the CLI can re-run it with --verbose.

    Args:
        level: Log level name or number; settings.log_level when omitted
        stream: Output stream, stdout by default

    Returns:
        The package logger
    """
    numeric = resolve_level(level)
    logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in [h for h in logger.handlers if getattr(h, "_drmpc", False)]:
        logger.removeHandler(handler)

    handler = logging.StreamHandler(stream or sys.stdout)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
    handler._drmpc = True  # type: ignore[attr-defined]
    logger.addHandler(handler)
    logger.setLevel(numeric)

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(max(numeric, logging.WARNING))

    return logger
