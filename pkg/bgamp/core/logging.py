"""
Logging configuration for the toolkit.

This module sets up structured logging using Loguru. The package disables
its own log records on import so library use stays silent; the CLI calls
``setup_logging`` to enable them with the configured sinks.
"""

import sys
from pathlib import Path
from typing import Any

from loguru import logger

from bgamp.core.config import get_settings

_FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level} | {name}:{function}:{line} - {message}"


def setup_logging() -> None:
    """
    Set up toolkit logging configuration.

    Configures Loguru with a stderr handler (stdout carries CSV output),
    plus rotating file handlers when ``LOG_DIR`` is set.
    """
    settings = get_settings()

    # Remove default handler
    logger.remove()

    if settings.LOG_JSON:
        logger.add(
            sys.stderr,
            format=_FILE_FORMAT,
            level=settings.LOG_LEVEL,
            serialize=True,  # JSON output
        )
    else:
        logger.add(
            sys.stderr,
            format="<green>{time:HH:mm:ss}</green> | "
                   "<level>{level: <8}</level> | "
                   "<cyan>{extra[analysis]}</cyan> - "
                   "<level>{message}</level>",
            level=settings.LOG_LEVEL,
            colorize=settings.DEBUG,
            backtrace=settings.DEBUG,
            diagnose=settings.DEBUG,
        )

    if settings.LOG_DIR:
        log_dir = Path(settings.LOG_DIR)
        log_dir.mkdir(parents=True, exist_ok=True)

        # Main log
        logger.add(
            log_dir / "bgamp.log",
            rotation="10 MB",
            retention="30 days",
            compression="gz",
            format=_FILE_FORMAT,
            level=settings.LOG_LEVEL,
            backtrace=settings.DEBUG,
            diagnose=settings.DEBUG,
        )

        # Warnings and above: solver fallbacks, failed samples
        logger.add(
            log_dir / "warnings.log",
            rotation="10 MB",
            retention="90 days",
            compression="gz",
            format=_FILE_FORMAT,
            level="WARNING",
            backtrace=True,
            diagnose=True,
        )

    logger.configure(extra={"analysis": "bgamp"})
    logger.enable("bgamp")
    logger.debug(f"Logging configured - Level: {settings.LOG_LEVEL}")


def get_analysis_logger(name: str) -> Any:
    """
    Get a logger bound to an analysis stage.

    Args:
        name: Stage name (e.g. 'dcsolve', 'netlist', 'mismatch')

    Returns:
        Logger instance with analysis context
    """
    return logger.bind(analysis=name)


def log_performance_metric(metric_name: str, value: float, unit: str = "s") -> None:
    """
    Log a performance metric for a long-running analysis.

    Args:
        metric_name: Name of the metric
        value: Metric value
        unit: Unit of measurement
    """
    logger.bind(analysis="performance").info(f"{metric_name}: {value:.3f}{unit}")
