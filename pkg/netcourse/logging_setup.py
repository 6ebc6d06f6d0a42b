"""Loguru sink configuration used by the CLI and the benchmark harness."""

import sys
from pathlib import Path

from loguru import logger

from netcourse.config import settings


def configure_logging(
    level: str | None = None,
    log_dir: str | Path | None = None,
    to_file: bool | None = None,
) -> None:
    """Replace the default loguru sink with console (and optional file) sinks."""
    level = (level or settings.log_level).upper()
    to_file = settings.log_to_file if to_file is None else to_file

    logger.remove()
    logger.add(sys.stderr, level=level)

    if to_file:
        directory = Path(log_dir or settings.log_dir)
        directory.mkdir(parents=True, exist_ok=True)
        logger.add(
            directory / "netcourse.log",
            rotation="10 MB",
            retention="1 week",
            level=level,
            encoding="utf-8",
        )
        logger.add(
            directory / "netcourse.err",
            rotation="10 MB",
            retention="1 week",
            level="ERROR",
            encoding="utf-8",
        )
    logger.debug(f"[logging] Configured level={level} to_file={to_file}")
