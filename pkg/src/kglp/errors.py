"""Custom exception classes for kglp."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


class KglpError(Exception):
    """Base exception for all kglp errors."""

    exit_code: int = EXIT_RUNTIME

    def __init__(self, message: str, suggestion: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.suggestion = suggestion


class ValidationError(KglpError):
    """Raised when inputs violate a documented contract (ids, shapes, ranges)."""

    exit_code = EXIT_VALIDATION


class FormatError(ValidationError):
    """Raised when an input file does not match its declared format."""

    def __init__(
        self,
        path: Union[str, Path],
        reason: str,
        line: Optional[int] = None,
        suggestion: Optional[str] = None,
    ):
        where = f"{path}:{line}" if line is not None else f"{path}"
        super().__init__(f"Malformed file {where}: {reason}", suggestion)
        self.path = Path(path)
        self.line = line
        self.reason = reason


class ConfigurationError(ValidationError):
    """Raised when there is an issue with the configuration."""

    def __init__(self, detail: str, suggestion: Optional[str] = None):
        super().__init__(f"Configuration Error: {detail}", suggestion)


class DivergenceError(KglpError):
    """Raised when a loss or gradient stops being finite."""

    exit_code = EXIT_RUNTIME

    def __init__(self, where: str, detail: str, suggestion: Optional[str] = None):
        if not suggestion:
            suggestion = "Lower the learning rates or check the input features for extreme values."
        super().__init__(f"Divergence in {where}: {detail}", suggestion)
        self.where = where
        self.detail = detail


def format_error(error: Exception) -> str:
    """Format an exception into a user-friendly message with suggestions."""
    if isinstance(error, KglpError):
        msg = [f"Error: {error.message}"]
        if error.suggestion:
            msg.append(f"Suggestion: {error.suggestion}")
        return "\n".join(msg)

    return f"Unexpected Error: {str(error)}"


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, KglpError):
        return error.exit_code
    return EXIT_RUNTIME


def error_record(error: BaseException) -> str:
    """Single-line JSON rendering of an error for machine consumption."""
    record = {
        "error": type(error).__name__,
        "message": error.message if isinstance(error, KglpError) else str(error),
        "suggestion": error.suggestion if isinstance(error, KglpError) else None,
        "exit_code": exit_code_for(error),
    }
    return json.dumps(record, sort_keys=True)
