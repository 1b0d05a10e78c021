"""Run configuration: flat ``key = value`` text files with ``#`` comments.

Keys match the long CLI flags with dashes replaced by underscores
(``max-cloud`` and ``max_cloud`` are both accepted).  Every field serializes
back to the same text, so a run can be reproduced from its config alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from datetime import datetime
from typing import Any

from .errors import ConfigError
from .stac import format_datetime, parse_datetime


def _floats(text: str, n: int, name: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise ConfigError(f"{name}: expected {n} comma-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{name}: not a number in {text!r}") from None


def _ints(text: str, n: int, name: str) -> tuple[int, ...]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise ConfigError(f"{name}: expected {n} comma-separated integers, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{name}: not an integer in {text!r}") from None


def _when(text: str, name: str) -> datetime:
    try:
        return parse_datetime(text)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _number(kind: type, text: str, name: str) -> Any:
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{name}: expected {kind.__name__}, got {text!r}") from None


def _bool(text: str, name: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"{name}: expected a boolean, got {text!r}")


@dataclass(frozen=True)
class RunConfig:
    catalog: str | None = None
    bbox: tuple[float, float, float, float] | None = None
    start: datetime | None = None
    end: datetime | None = None
    bands: tuple[str, ...] | None = None
    resolution: float | None = None
    chunk: tuple[int, int, int, int] = (1, 1, 256, 256)
    workers: int = 1
    max_cloud: float = 0.5
    min_valid: float = 0.25
    seed: int = 0
    out: str | None = None
    store: str | None = None
    labels: str | None = None
    model: str | None = None
    epochs: int = 100
    lr: float = 0.01
    k: int = 10
    resampling: str = "nearest"
    verbose: bool = False

    def __post_init__(self) -> None:
        if self.bbox is not None and (self.bbox[0] > self.bbox[2] or self.bbox[1] > self.bbox[3]):
            raise ConfigError(f"bbox is inverted: {self.bbox}")
        if self.start is not None and self.end is not None and self.start > self.end:
            raise ConfigError("start is after end")
        if self.resolution is not None and not self.resolution > 0:
            raise ConfigError("resolution must be > 0")
        if any(c <= 0 for c in self.chunk):
            raise ConfigError(f"chunk dims must be positive, got {self.chunk}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0.0 <= self.max_cloud <= 1.0 or not 0.0 <= self.min_valid <= 1.0:
            raise ConfigError("max_cloud and min_valid must lie in [0, 1]")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.resampling not in ("nearest", "bilinear"):
            raise ConfigError(f"resampling must be nearest or bilinear, got {self.resampling!r}")
        if self.bands is not None and not self.bands:
            raise ConfigError("bands must not be empty")

    def replace(self, **changes: Any) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError("missing required setting(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {format_value(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: RunConfig | None = None) -> RunConfig:
        values: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
        return (base or cls()).with_strings(values)

    def with_strings(self, values: dict[str, str]) -> RunConfig:
        """Apply string settings (config-file or CLI values) on top of this config."""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown setting(s): {', '.join(unknown)}")
        return self.replace(**{k: parse_value(k, v) for k, v in values.items()})


def parse_value(name: str, text: str) -> Any:
    text = text.strip()
    if name == "bbox":
        return _floats(text, 4, name)
    if name == "chunk":
        return _ints(text, 4, name)
    if name in ("start", "end"):
        return _when(text, name)
    if name == "bands":
        bands = tuple(b.strip() for b in text.split(",") if b.strip())
        if not bands:
            raise ConfigError("bands: empty list")
        return bands
    if name in ("resolution", "max_cloud", "min_valid", "lr"):
        return _number(float, text, name)
    if name in ("workers", "seed", "epochs", "k"):
        return _number(int, text, name)
    if name == "verbose":
        return _bool(text, name)
    return text


def format_value(value: Any) -> str:
    if isinstance(value, datetime):
        return format_datetime(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
