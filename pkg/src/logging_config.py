"""Logging configuration: console (stderr) and rotating file handlers, with per-module levels."""

import logging
import os
import sys
from collections.abc import Mapping
from logging.handlers import RotatingFileHandler
from pathlib import Path

LOG_DIR = Path(os.getenv("LOG_DIR", "logs"))
LOG_FILE = LOG_DIR / "ec-stability.log"
LOG_MAX_BYTES = 5 * 1024 * 1024
LOG_BACKUP_COUNT = 5
# Process name tells pool workers apart in sweep logs
LOG_FORMAT = "%(asctime)s | %(levelname)-7s | %(processName)s | %(name)s | %(message)s"

# Floors applied under a verbose root level. The sweep modules log once per chunk and
# per cache entry, which drowns certificate output at DEBUG; matplotlib's font manager
# is chatty too. Explicit logger_levels entries replace these floors.
LOGGER_LEVEL_FLOORS: dict[str, int] = {
    "matplotlib": logging.WARNING,
    "prime_sweep": logging.INFO,
    "sweep_runner": logging.INFO,
    "sweep_cache": logging.INFO,
}


def _to_level(name: str) -> int:
    return getattr(logging, str(name).upper(), logging.INFO)


def setup_logging(log_level: str = "INFO", logger_levels: Mapping[str, str] | None = None) -> None:
    """
    Configure logging for the CLI.

    Console output goes to stderr so stdout stays clean for certificates,
    JSON reports and CSV. Reconfigures existing handlers if called again.

    Args:
        log_level: Root verbosity level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        logger_levels: Per-module levels, e.g. {"sweep_runner": "DEBUG"}; these win
            over LOGGER_LEVEL_FLOORS
    """
    level = _to_level(log_level)

    LOG_DIR.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[
            logging.StreamHandler(sys.stderr),
            RotatingFileHandler(
                filename=LOG_FILE,
                maxBytes=LOG_MAX_BYTES,
                backupCount=LOG_BACKUP_COUNT,
                encoding="utf-8",
            ),
        ],
        force=True,
    )

    for name, floor in LOGGER_LEVEL_FLOORS.items():
        logging.getLogger(name).setLevel(max(level, floor))
    for name, module_level in (logger_levels or {}).items():
        logging.getLogger(name).setLevel(_to_level(module_level))
