"""Configuration utilities for psvgp."""

from __future__ import annotations

import math
import numbers
import tomllib
from collections.abc import Callable
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Self

from psvgp.errors import ConfigError

CONFIG_FILENAME = "psvgp.toml"
RESOLVED_FILENAME = "resolved-config.txt"

ADJACENCY_RULES = ("edge", "corner")
TRANSPORTS = ("inproc", "zmq")


def _is_int(value: Any) -> bool:
    return isinstance(value, numbers.Integral) and not isinstance(value, bool)


def _is_real(value: Any) -> bool:
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


# annotation -> (check, description)
FIELD_TYPES: dict[str, tuple[Callable[[Any], bool], str]] = {
    "int": (_is_int, "an integer"),
    "float": (_is_real, "a number"),
    "str": (lambda v: isinstance(v, str), "a string"),
    "bool": (lambda v: isinstance(v, bool), "a boolean"),
}


def find_config(start: Path | None = None) -> Path | None:
    """Find psvgp.toml by walking up from start directory.

    Like git finding .git, walks up parent directories until finding
    psvgp.toml or reaching filesystem root.

    Args:
        start: Directory to start searching from (default: cwd)

    Returns:
        Path to psvgp.toml if found, None otherwise
    """
    if start is None:
        start = Path.cwd()

    current = start.resolve()
    while True:
        config_path = current / CONFIG_FILENAME
        if config_path.exists():
            return config_path

        parent = current.parent
        if parent == current:
            # Reached filesystem root
            return None
        current = parent


@dataclass(frozen=True)
class TrainRun:
    """One fully resolved experiment configuration."""

    # data
    data: str = "synthetic"  # "synthetic" | path to lon,lat,value CSV
    synth_size: int = 64
    synth_lengthscale: float = 0.08
    synth_variance: float = 1.0
    synth_precision: float = 25.0
    data_seed: int = 0
    holdout: float = 0.0

    # model & partitioning
    grid: tuple[int, int] = (4, 4)
    m: int = 5
    adjacency: str = "edge"  # edge | corner
    wraparound: bool = False
    probes_per_edge: int = 23

    # optimization
    delta: float = 0.0
    batch: int = 32
    iterations: int = 500
    seed: int = 1
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    # execution
    procs: int = 1
    transport: str = "inproc"  # inproc | zmq
    watchdog: float = 60.0
    trace_every: int = 0
    out: str = "out"

    @property
    def n_partitions(self) -> int:
        return self.grid[0] * self.grid[1]

    @classmethod
    def parse(cls, data: dict[str, Any]) -> Self:
        """Parse a run from a flat TOML table."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

        values = dict(data)
        if "grid" in values:
            values["grid"] = parse_grid(values["grid"])
        return cls(**values)

    @classmethod
    def load(cls, path: Path) -> Self:
        """Load a run from a TOML file."""
        try:
            with path.open("rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        return cls.parse(data)

    def override(self, **changes: Any) -> TrainRun:
        """Return a copy with the non-None `changes` applied."""
        applied = {k: v for k, v in changes.items() if v is not None}
        if "grid" in applied:
            applied["grid"] = parse_grid(applied["grid"])
        return replace(self, **applied)

    def validate(self) -> Self:
        """Raise ConfigError unless every value has its type and is in range."""
        problems = self._type_problems()
        if problems:
            raise ConfigError("; ".join(problems))
        nx, ny = self.grid
        if nx < 1 or ny < 1:
            problems.append(f"grid must be positive, got {nx},{ny}")
        for name in ("m", "batch", "iterations", "procs", "probes_per_edge", "synth_size"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be at least 1, got {getattr(self, name)}")
        if not 0.0 <= self.delta <= 1.0:
            problems.append(f"delta must be in [0, 1], got {self.delta}")
        if not 0.0 <= self.holdout < 1.0:
            problems.append(f"holdout must be in [0, 1), got {self.holdout}")
        for name in ("synth_lengthscale", "synth_variance", "synth_precision", "lr", "eps", "watchdog"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                problems.append(f"{name} must be positive, got {value}")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                problems.append(f"{name} must be in [0, 1), got {getattr(self, name)}")
        for name in ("seed", "data_seed"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.trace_every < 0:
            problems.append(f"trace_every must be non-negative, got {self.trace_every}")
        if self.adjacency not in ADJACENCY_RULES:
            problems.append(f"adjacency must be one of {ADJACENCY_RULES}, got {self.adjacency!r}")
        if self.transport not in TRANSPORTS:
            problems.append(f"transport must be one of {TRANSPORTS}, got {self.transport!r}")
        if nx >= 1 and ny >= 1 and self.procs > self.n_partitions:
            problems.append(
                f"procs ({self.procs}) exceeds the number of partitions ({self.n_partitions})"
            )
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def _type_problems(self) -> list[str]:
        problems: list[str] = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "grid":
                ok = isinstance(value, tuple) and len(value) == 2 and all(_is_int(v) for v in value)
                label = "a pair of integers"
            else:
                check, label = FIELD_TYPES[str(f.type)]
                ok = check(value)
            if not ok:
                problems.append(f"{f.name} must be {label}, got {value!r}")
        return problems

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["grid"] = list(self.grid)
        return data

    def to_toml(self) -> str:
        """Serialize to TOML."""
        lines = ["# psvgp resolved configuration", ""]
        for key, value in self.to_dict().items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
        return "\n".join(lines)

    def save(self, path: Path) -> None:
        """Save the run to a TOML file."""
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_toml())


def _toml_value(value: Any) -> str:
    """Render a scalar or list as TOML.

    >>> _toml_value(True), _toml_value(0.1), _toml_value("a"), _toml_value([4, 4])
    ('true', '0.1', '"a"', '[4, 4]')
    """
    match value:
        case bool():
            return "true" if value else "false"
        case int():
            return str(value)
        case float():
            return repr(value)
        case str():
            escaped = value.replace("\\", "\\\\").replace('"', '\\"')
            return f'"{escaped}"'
        case list():
            return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {value!r} to TOML")


def parse_grid(value: Any) -> tuple[int, int]:
    """Parse "NX,NY" or a two-element sequence.

    >>> parse_grid("20,20")
    (20, 20)
    >>> parse_grid([4, 2])
    (4, 2)
    """
    if isinstance(value, str):
        parts: list[Any] = [p.strip() for p in value.split(",")]
    else:
        parts = list(value) if isinstance(value, (list, tuple)) else [value]
        if not all(_is_int(p) for p in parts):
            raise ConfigError(f"grid must be NX,NY, got {value!r}")
    try:
        nx, ny = (int(p) for p in parts)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"grid must be NX,NY, got {value!r}") from e
    return nx, ny


def parse_bool(value: str) -> bool:
    """Parse a command-line boolean.

    >>> parse_bool("yes"), parse_bool("0")
    (True, False)
    """
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def parse_list(value: str, kind: type[int] | type[float]) -> list[Any]:
    """Parse a comma-separated list of numbers.

    >>> parse_list("0,0.125,1", float)
    [0.0, 0.125, 1.0]
    """
    try:
        return [kind(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"expected a comma-separated list, got {value!r}") from e
