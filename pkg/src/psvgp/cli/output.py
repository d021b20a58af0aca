"""CLI output utilities."""

from __future__ import annotations

import json
import math
import sys
from argparse import Namespace
from enum import Enum
from pathlib import Path
from typing import Any

from psvgp.errors import ConfigError


class OutputFormat(Enum):
    """Output format options."""

    TEXT = "text"
    JSON = "json"


class Output:
    """Handle output based on verbosity and format settings."""

    def __init__(
        self, *, quiet: bool = False, verbose: bool = False, fmt: OutputFormat
    ) -> None:
        self.quiet = quiet
        self.verbose = verbose
        self.format = fmt
        self._json_data: dict[str, Any] = {}

    def info(self, message: str) -> None:
        """Print info message (normal and verbose mode only)."""
        if not self.quiet and self.format == OutputFormat.TEXT:
            print(message)

    def verbose_info(self, message: str) -> None:
        """Print verbose message (verbose mode only)."""
        if self.verbose and self.format == OutputFormat.TEXT:
            print(message)

    def error(self, message: str) -> None:
        """Print error message (always in text mode, collected for JSON)."""
        if self.format == OutputFormat.TEXT:
            print(message, file=sys.stderr)

    def metric(self, name: str, value: Any) -> None:
        """Report one named result: a `name: value` line, or a JSON field."""
        self._json_data[name] = _plain(value)
        self.info(f"{name}: {_format(value)}")

    def json_output(self, data: dict[str, Any]) -> None:
        """Merge data into the JSON document."""
        self._json_data |= {k: _plain(v) for k, v in data.items()}

    def finalize(self) -> None:
        """Finalize output (print JSON if in JSON mode)."""
        if self.format == OutputFormat.JSON:
            print(json.dumps(self._json_data, default=str))


def _plain(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _format(value: Any) -> str:
    """Text rendering of a metric.

    >>> _format(0.123456789), _format(3), _format(float("nan"))
    ('0.123457', '3', 'nan')
    """
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def get_config_path(args: Namespace) -> Path | None:
    """Get config path from args.

    Priority:
    1. --config (explicit path)
    2. find_config() from cwd

    Returns:
        Path to config file, or None when no psvgp.toml is found
    """
    from psvgp.config import find_config

    config_arg = getattr(args, "config", None)
    if config_arg:
        config_path = Path(config_arg)
        if not config_path.exists():
            raise ConfigError(f"Config not found: {config_path}")
        return config_path

    return find_config(Path.cwd())
