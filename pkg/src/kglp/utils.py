"""Utility functions for logging, parallelism and deterministic JSON output."""

from __future__ import annotations

import importlib.util
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Callable, Iterable, List, Sequence, TypeVar

from .config import LoggingConfig

T = TypeVar("T")
R = TypeVar("R")

LOGGER_NAME = "kglp"

_STANDARD_RECORD_KEYS = frozenset([
    "args", "asctime", "created", "exc_info", "exc_text", "filename",
    "funcName", "levelname", "levelno", "lineno", "module",
    "msecs", "message", "msg", "name", "pathname", "process",
    "processName", "relativeCreated", "stack_info", "thread", "threadName",
    "taskName",
])


def _has_rich() -> bool:
    """Check if rich is available for console logging."""
    return importlib.util.find_spec("rich") is not None


class JSONFormatter(logging.Formatter):
    """Format logs as JSON objects."""

    def format(self, record):
        log_record = {
            "timestamp": self.formatTime(record, self.datefmt),
            "level": record.levelname,
            "message": record.getMessage(),
            "name": record.name,
            "path": record.pathname,
            "lineno": record.lineno,
        }

        if record.exc_info:
            log_record["exception"] = self.formatException(record.exc_info)

        # Include extra attributes
        for key, value in record.__dict__.items():
            if key not in _STANDARD_RECORD_KEYS:
                log_record[key] = value

        return json.dumps(log_record, default=str)


def setup_logging(config: LoggingConfig) -> logging.Logger:
    logger = logging.getLogger(LOGGER_NAME)

    level = getattr(logging, config.level.upper(), logging.INFO)
    logger.setLevel(level)

    if logger.handlers:
        logger.debug("Logging handlers already exist; reusing existing setup")
        return logger

    if config.file is not None:
        Path(config.file).parent.mkdir(parents=True, exist_ok=True)
        fh = RotatingFileHandler(
            config.file,
            maxBytes=config.rotation_max_bytes,
            backupCount=config.rotation_backup_count,
            encoding='utf-8'
        )
        if config.format.lower() == "json":
            fh.setFormatter(JSONFormatter(datefmt='%Y-%m-%d %H:%M:%S'))
        else:
            fh.setFormatter(logging.Formatter('[%(asctime)s] %(levelname)s: %(message)s', datefmt='%Y-%m-%d %H:%M:%S'))
        logger.addHandler(fh)

    if _has_rich():
        from rich.console import Console
        from rich.logging import RichHandler

        ch = RichHandler(
            console=Console(stderr=True),
            show_level=True,
            show_path=False,
            omit_repeated_times=True,
        )
        # Level goes on the instance so tests can mock the constructor
        ch.setLevel(level)
    else:
        ch = logging.StreamHandler()
        if config.format.lower() == "json":
            ch.setFormatter(JSONFormatter(datefmt='%Y-%m-%d %H:%M:%S'))
        else:
            ch.setFormatter(logging.Formatter('[%(asctime)s] %(levelname)s: %(message)s', datefmt='%Y-%m-%d %H:%M:%S'))
        ch.setLevel(level)

    logger.addHandler(ch)
    logger.propagate = False

    logger.debug(f"Logging initialized (file: {config.file}, Rich: {_has_rich()}, Format: {config.format})")
    return logger


def parallel_map(func: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """Map `func` over `items`, preserving order.

    Runs inline when `workers` is 1 so single-writer mode stays sequential.
    """
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, items))


def write_json(path: Path, payload: Any) -> None:
    """Write JSON with sorted keys so reruns produce identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_jsonl(path: Path, records: Iterable[Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + "\n")
