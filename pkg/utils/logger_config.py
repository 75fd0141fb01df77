"""
Restenosis Core - Structured Logging

One JSON object per record on stderr, optionally mirrored to a log file.
Step diagnostics ride along as ``extra={"extra_fields": {...}}`` and are
merged into the top-level object.
"""

import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

LOGGER_NAME = "restenosis_core"


class RestenosisStructuredFormatter(logging.Formatter):
    """Render a record as ``{timestamp, level, module, message[, exception], **extra_fields}``."""

    def format(self, record: logging.LogRecord) -> str:
        log_record = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "module": record.module,
            "message": record.getMessage(),
        }
        if record.exc_info:
            log_record["exception"] = self.formatException(record.exc_info)
        if hasattr(record, "extra_fields"):
            log_record.update(record.extra_fields)
        return json.dumps(log_record, ensure_ascii=False, default=_json_default)


def _json_default(value: object) -> object:
    # residual histories arrive as numpy arrays or scalars
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)


def setup_logging(log_level: int | str = logging.INFO, log_file: str | None = None) -> logging.Logger:
    """Route the simulator logger to stderr and, when ``log_file`` is set, to that file."""
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(log_level)
    logger.handlers.clear()
    logger.propagate = False

    formatter = RestenosisStructuredFormatter()
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(path, encoding="utf-8"))
    for handler in handlers:
        handler.setFormatter(formatter)
        handler.setLevel(log_level)
        logger.addHandler(handler)
    return logger


def get_logger() -> logging.Logger:
    """The simulator logger; WARNING to stderr until ``setup_logging`` is called."""
    logger = logging.getLogger(LOGGER_NAME)
    if not logger.hasHandlers():
        setup_logging(log_level=logging.WARNING)
    return logger
