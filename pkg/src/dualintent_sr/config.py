"""Run configuration: one flat ``section.key = value`` file drives every command.

The format is deliberately minimal — no nesting, no quoting, ``#`` comments —
so a run's resolved configuration can be written back out as a manifest and
diffed across runs. Parsing is strict: unknown keys, duplicate keys, and
type mismatches are errors with line numbers, because a silently ignored
typo in an experiment config is a corrupted experiment.
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .model import TrainConfig
from .synth import WorldConfig

__all__ = [
    "EvalConfig",
    "ExportConfig",
    "SweepConfig",
    "RunConfig",
    "parse_run_config",
    "format_run_config",
    "load_run_config",
    "write_run_config",
]


@dataclass(slots=True)
class EvalConfig:
    """Test-time ranking protocol settings."""

    seed: int = 0
    negatives: int = 99
    k: int = 5
    max_trials: int | None = None

    def validate(self) -> None:
        if self.negatives < 1:
            raise ConfigError(f"eval.negatives must be >= 1, got {self.negatives}")
        if self.k < 1:
            raise ConfigError(f"eval.k must be >= 1, got {self.k}")
        if self.max_trials is not None and self.max_trials < 1:
            raise ConfigError(f"eval.max_trials must be >= 1, got {self.max_trials}")


@dataclass(slots=True)
class ExportConfig:
    """Embedding-export settings."""

    max_records: int | None = 1000

    def validate(self) -> None:
        if self.max_records is not None and self.max_records < 1:
            raise ConfigError(f"export.max_records must be >= 1, got {self.max_records}")


@dataclass(slots=True)
class SweepConfig:
    """Loss-weight grids explored by the sweep command."""

    lambda1: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5, 2.0)
    lambda2: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

    def validate(self) -> None:
        if not self.lambda1 or not self.lambda2:
            raise ConfigError("sweep grids must be non-empty")
        if any(v < 0 for v in self.lambda1 + self.lambda2):
            raise ConfigError("sweep grid values must be non-negative")


@dataclass(slots=True)
class RunConfig:
    """Everything a command needs, grouped by section."""

    world: WorldConfig
    world_seed: int
    train: TrainConfig
    eval: EvalConfig
    export: ExportConfig
    sweep: SweepConfig
    data_dir: str
    vocab_size: int
    out_dir: str

    @classmethod
    def default(cls) -> "RunConfig":
        return cls(
            world=WorldConfig(),
            world_seed=0,
            train=TrainConfig(),
            eval=EvalConfig(),
            export=ExportConfig(),
            sweep=SweepConfig(),
            data_dir="data",
            vocab_size=5000,
            out_dir="out",
        )

    def validate(self) -> None:
        self.world.validate()
        self.train.validate()
        self.eval.validate()
        self.export.validate()
        self.sweep.validate()
        if self.vocab_size < 2:
            raise ConfigError(f"data.vocab_size must be >= 2, got {self.vocab_size}")
        if not self.data_dir:
            raise ConfigError("data.dir must not be empty")
        if not self.out_dir:
            raise ConfigError("out.dir must not be empty")


# Scalar keys that do not live inside a section dataclass.
_SCALAR_KEYS = {
    "world.seed": ("world_seed", int),
    "data.dir": ("data_dir", str),
    "data.vocab_size": ("vocab_size", int),
    "out.dir": ("out_dir", str),
}

_SECTIONS = ("world", "train", "eval", "export", "sweep")


def _parse_value(raw: str, target_type, where: str):
    raw = raw.strip()
    if target_type is bool:
        if raw == "true":
            return True
        if raw == "false":
            return False
        raise ConfigError(f"{where}: expected true/false, got {raw!r}")
    if target_type is int:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from exc
    if target_type is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: expected a number, got {raw!r}") from exc
    if target_type is str:
        if not raw:
            raise ConfigError(f"{where}: expected a non-empty string")
        return raw
    if target_type == (int | None):
        if raw == "none":
            return None
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: expected an integer or 'none', got {raw!r}") from exc
    if target_type == tuple[float, ...]:
        parts = [p.strip() for p in raw.split(",")]
        if not any(parts):
            raise ConfigError(f"{where}: expected a comma-separated list of numbers")
        try:
            return tuple(float(p) for p in parts if p)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad number in list {raw!r}") from exc
    raise ConfigError(f"{where}: unsupported value type {target_type!r}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse config text over defaults; every line is ``key = value``."""
    config = RunConfig.default()
    hints = {
        name: typing.get_type_hints(type(getattr(config, name))) for name in _SECTIONS
    }
    seen: set[str] = set()

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        if "=" not in stripped:
            raise ConfigError(f"{where}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key in seen:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        seen.add(key)

        if key in _SCALAR_KEYS:
            attr, target_type = _SCALAR_KEYS[key]
            setattr(config, attr, _parse_value(raw, target_type, f"{where}: {key}"))
            continue
        section_name, _, field_name = key.partition(".")
        if section_name not in _SECTIONS or not field_name:
            raise ConfigError(f"{where}: unknown key {key!r}")
        section = getattr(config, section_name)
        section_hints = hints[section_name]
        if field_name not in section_hints:
            raise ConfigError(f"{where}: unknown key {key!r}")
        value = _parse_value(raw, section_hints[field_name], f"{where}: {key}")
        setattr(section, field_name, value)

    config.validate()
    return config


def format_run_config(config: RunConfig) -> str:
    """Render the fully resolved configuration in canonical key order.

    ``parse_run_config(format_run_config(c))`` reproduces ``c`` exactly.
    """
    lines: list[str] = []
    lines.append("# resolved run configuration")
    for section_name in _SECTIONS:
        section = getattr(config, section_name)
        for f in fields(section):
            lines.append(f"{section_name}.{f.name} = {_format_value(getattr(section, f.name))}")
        if section_name == "world":
            lines.append(f"world.seed = {config.world_seed}")
    lines.append(f"data.dir = {config.data_dir}")
    lines.append(f"data.vocab_size = {config.vocab_size}")
    lines.append(f"out.dir = {config.out_dir}")
    return "\n".join(lines) + "\n"


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_run_config(text, source=str(path))


def write_run_config(config: RunConfig, path) -> None:
    Path(path).write_text(format_run_config(config), encoding="utf-8")
