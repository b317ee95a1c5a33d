"""Run configuration: flat TOML tables mirroring the dataclasses."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .evolution import StepConfig
from .robin import SolverConfig
from .shapegen import ShapeError, ShapeSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CaseConfig:
    # "dumbbell" builds the bridge shape from [shape]; "circle" a circle of
    # the given radius with shape.nodes nodes
    kind: str = "dumbbell"
    radius: float = 1.0

    def validate(self) -> None:
        if self.kind not in ("dumbbell", "circle"):
            raise ConfigError(f"unknown case kind {self.kind!r}")
        if self.radius <= 0:
            raise ConfigError("circle radius must be positive")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    frame_every: int = 10
    plots: bool = False

    def validate(self) -> None:
        if self.frame_every < 1:
            raise ConfigError("frame_every must be at least 1")


@dataclass(frozen=True)
class RunConfig:
    case: CaseConfig = field(default_factory=CaseConfig)
    shape: ShapeSpec = field(default_factory=ShapeSpec)
    step: StepConfig = field(default_factory=StepConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> None:
        try:
            self.case.validate()
            if self.case.kind == "dumbbell":
                self.shape.validate()
            elif self.shape.nodes % 2 or self.shape.nodes < 16:
                raise ConfigError("nodes must be even and >= 16")
            self.step.validate()
            self.solver.validate()
            self.output.validate()
        except (ShapeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def step_config(self) -> StepConfig:
        """StepConfig carrying the [solver] table."""
        return dataclasses.replace(self.step, solver=self.solver)


_TABLES = {"case": CaseConfig, "shape": ShapeSpec, "step": StepConfig, "solver": SolverConfig, "output": OutputConfig}


def _build(cls, table: dict, name: str):
    fields = {f.name: f for f in dataclasses.fields(cls) if not (cls is StepConfig and f.name == "solver")}
    unknown = set(table) - set(fields)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    values = {}
    for key, val in table.items():
        default = getattr(cls(), key)
        if isinstance(default, bool):
            if not isinstance(val, bool):
                raise ConfigError(f"[{name}] {key} must be true or false")
        elif isinstance(default, int):
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"[{name}] {key} must be an integer")
        elif isinstance(default, float):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"[{name}] {key} must be a number")
            val = float(val)
        elif isinstance(default, str) and not isinstance(val, str):
            raise ConfigError(f"[{name}] {key} must be a string")
        values[key] = val
    return cls(**values)


def from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_TABLES)
    if unknown:
        raise ConfigError(f"unknown tables: {sorted(unknown)}")
    parts = {}
    for name, cls in _TABLES.items():
        table = data.get(name, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] must be a table")
        parts[name] = _build(cls, table, name)
    cfg = RunConfig(**parts)
    cfg.validate()
    return cfg


def to_dict(cfg: RunConfig) -> dict:
    out = {}
    for name in _TABLES:
        table = dataclasses.asdict(getattr(cfg, name))
        table.pop("solver", None)
        out[name] = table
    return out


def loads(text: str) -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return from_dict(data)


def dumps(cfg: RunConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def load(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return loads(text)
