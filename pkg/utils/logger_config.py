"""Logging configuration for the robust-anticipation toolkit."""

import logging
import sys
from pathlib import Path
from typing import Optional

PROJECT_LOGGER = "secure-anticipation"

_FORMATTER = logging.Formatter(
    fmt="%(asctime)s [%(levelname)8s] %(name)s: %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)


def setup_logger(
    name: str = PROJECT_LOGGER,
    level: str = "INFO",
    log_file: Optional[str] = None,
) -> logging.Logger:
    """Setup and configure logger with console and optional file output.

    Args:
        name: Logger name
        level: Logging level (DEBUG, INFO, WARNING, ERROR)
        log_file: Optional file path for logging

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    # Prevent duplicate handlers
    if logger.handlers:
        return logger

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(_FORMATTER)
    logger.addHandler(console_handler)

    if log_file:
        attach_file_handler(log_file, logger)

    return logger


def attach_file_handler(
    log_file: str, logger: Optional[logging.Logger] = None
) -> logging.FileHandler:
    """Mirror project log output into a file (one per run directory).

    Args:
        log_file: Destination path; parent directories are created
        logger: Logger to attach to, the project logger by default

    Returns:
        The attached handler, so callers can detach it when the run ends
    """
    target = logger or logging.getLogger(PROJECT_LOGGER)
    log_path = Path(log_file)
    log_path.parent.mkdir(parents=True, exist_ok=True)

    file_handler = logging.FileHandler(log_path)
    file_handler.setFormatter(_FORMATTER)
    target.addHandler(file_handler)
    return file_handler


def get_logger(component: str) -> logging.Logger:
    """Get logger for a specific component.

    Args:
        component: Name of the component (e.g. "trainer", "pgd")

    Returns:
        Child logger of the project logger
    """
    return logging.getLogger(f"{PROJECT_LOGGER}.{component}")


# Global logger instance
logger = setup_logger()
