"""Error handling for colabelcrf.

Every failure raised by the library is a :class:`CoLabelError` carrying an
error code, a category, a context dictionary naming the offending file, flag
or index, and optional suggested fixes. Subclasses also derive from the
matching builtin exception so callers may catch either.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np


class ErrorCategory(str, Enum):
    """Error categories for classification."""

    FORMAT = "format"  # Binary/text file layout violations
    DIMENSION = "dimension"  # Shape or count mismatches
    NUMERIC = "numeric"  # NaN/inf entries
    VALUE = "value"  # Out-of-range labels or parameters
    SIZE = "size"  # Oracle size guards
    CONFIG = "config"  # Flags and config files
    IO = "io"  # Missing files and directories


class ErrorCodes:
    """Standard error codes."""

    FORMAT_BAD_MAGIC = "FORMAT001"
    FORMAT_TRUNCATED = "FORMAT002"
    FORMAT_BAD_HEADER = "FORMAT003"
    FORMAT_UNSUPPORTED = "FORMAT004"

    DIMENSION_MISMATCH = "DIMENSION001"
    DIMENSION_EMPTY = "DIMENSION002"

    NUMERIC_NON_FINITE = "NUMERIC001"

    VALUE_LABEL_RANGE = "VALUE001"
    VALUE_PARAMETER = "VALUE002"
    VALUE_MEMBERSHIP = "VALUE003"

    SIZE_ORACLE_GUARD = "SIZE001"

    CONFIG_BAD_VALUE = "CONFIG001"
    CONFIG_UNKNOWN_KEY = "CONFIG002"
    CONFIG_SYNTAX = "CONFIG003"

    IO_MISSING = "IO001"
    IO_FRAME_SET = "IO002"


@dataclass
class ErrorFix:
    """A suggested fix attached to an error."""

    description: str

    def __str__(self) -> str:
        return self.description


class CoLabelError(Exception):
    """Base exception with code, category, context and suggested fixes."""

    category: ErrorCategory = ErrorCategory.VALUE
    default_code: str = ErrorCodes.VALUE_PARAMETER

    def __init__(
        self,
        message: str,
        code: str | None = None,
        **context: Any,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.code = code or self.default_code
        self.context: dict[str, Any] = dict(context)
        self.suggested_fixes: list[ErrorFix] = []

    def add_fix(self, description: str) -> CoLabelError:
        """Add a suggested fix and return self for chaining."""
        self.suggested_fixes.append(ErrorFix(description))
        return self

    def __str__(self) -> str:
        parts = []
        location = self.context.get("path")
        if location is not None:
            parts.append(f"{Path(str(location)).name}:")
        parts.append(self.message)
        parts.append(f"({self.code})")
        result = " ".join(parts)

        extra = {k: v for k, v in self.context.items() if k != "path"}
        if extra:
            result += "\n  Context: " + ", ".join(f"{k}={v}" for k, v in extra.items())
        if self.suggested_fixes:
            result += "\n  Suggested fixes:"
            for fix in self.suggested_fixes:
                result += f"\n    - {fix}"
        return result


class FormatError(CoLabelError, ValueError):
    category = ErrorCategory.FORMAT
    default_code = ErrorCodes.FORMAT_BAD_HEADER


class DimensionError(CoLabelError, ValueError):
    category = ErrorCategory.DIMENSION
    default_code = ErrorCodes.DIMENSION_MISMATCH


class NumericError(CoLabelError, ValueError):
    category = ErrorCategory.NUMERIC
    default_code = ErrorCodes.NUMERIC_NON_FINITE


class ValueRangeError(CoLabelError, ValueError):
    category = ErrorCategory.VALUE
    default_code = ErrorCodes.VALUE_PARAMETER


class SizeGuardError(CoLabelError, ValueError):
    category = ErrorCategory.SIZE
    default_code = ErrorCodes.SIZE_ORACLE_GUARD


class ConfigError(CoLabelError, ValueError):
    category = ErrorCategory.CONFIG
    default_code = ErrorCodes.CONFIG_BAD_VALUE


class InputFileError(CoLabelError, FileNotFoundError):
    category = ErrorCategory.IO
    default_code = ErrorCodes.IO_MISSING


def require_finite(array: Any, what: str, **context: Any) -> None:
    """Raise :class:`NumericError` naming the first non-finite entry."""
    arr = np.asarray(array)
    bad = ~np.isfinite(arr)
    if bad.any():
        index = np.unravel_index(int(np.argmax(bad)), arr.shape)
        raise NumericError(
            f"Non-finite entry in {what} at index {tuple(int(i) for i in index)}",
            index=tuple(int(i) for i in index),
            **context,
        )


__all__ = [
    "ErrorCategory",
    "ErrorCodes",
    "ErrorFix",
    "CoLabelError",
    "FormatError",
    "DimensionError",
    "NumericError",
    "ValueRangeError",
    "SizeGuardError",
    "ConfigError",
    "InputFileError",
    "require_finite",
]
