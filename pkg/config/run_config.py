"""Experiment configuration: typed sections plus the flat `section.key = value` file format."""

import re
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from shared.errors import InvalidConfigurationError
from shared.rng import derive_seed
from shared.utils import validation_to_config_error
from simulator.accounting.models import Method
from simulator.local_trainer.models import LearningRateSchedule, LocalConfig, ScheduleKind
from simulator.partitioner.models import MAX_PARTITION_RETRIES, PartitionMode, PartitionSpec
from simulator.sketch.models import Seed, SketchKind
from simulator.tasks.models import TaskConfig, TaskVariant


class Precision(str, Enum):
    """Floating-point width of data, weights and projections."""
    FLOAT64 = "float64"
    FLOAT32 = "float32"


# ── Sections ───────────────────────────────────────────────────────

class FederationSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    method: Method = Field(default=Method.FEDKRSO, description="fedkrso, fedit, ffa_lora or fedfft")
    num_clients: int = Field(default=4, description="Client count N", ge=1)
    rounds: int = Field(default=10, description="Round count T", ge=1)
    K: int = Field(default=10, description="Seeds per round", ge=1)
    intervals: int = Field(default=5, description="Intervals per round I", ge=1)
    interval_length: int = Field(default=20, description="Iterations per interval J", ge=1)
    local_iterations: int = Field(default=100, description="Local-iteration budget I·J", ge=1)
    enforce_budget: bool = Field(default=True, description="Require intervals * interval_length == local_iterations")
    workers: int = Field(default=1, description="Client threads per round", ge=1)


class SketchSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: SketchKind = Field(default=SketchKind.GAUSSIAN, description="gaussian or row_orthonormal_scaled")
    rank: int = Field(default=4, description="Sketch rank r", ge=1)


class OptimizerSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=0.05, description="Base step size η", ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    epsilon: float = Field(default=1e-8, gt=0)
    momentum_enabled: bool = Field(default=True)
    standard_bias_correction: bool = Field(default=False, description="1-β^t divisors instead of 1-β")
    batch_size: int = Field(default=16, ge=1)
    schedule: ScheduleKind = Field(default=ScheduleKind.CONSTANT, description="constant or cosine")
    min_lr_ratio: float = Field(default=0.0, description="Cosine floor as a fraction of η", ge=0, le=1)


class LoraSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rank: int = Field(default=4, description="LoRA rank r_lora", ge=1)
    init_kind: SketchKind = Field(default=SketchKind.GAUSSIAN, description="Distribution of the A factor")


class PartitionSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: PartitionMode = Field(default=PartitionMode.IID, description="iid or dirichlet")
    alpha: Optional[float] = Field(default=None, description="Dirichlet concentration", gt=0)
    max_retries: int = Field(default=MAX_PARTITION_RETRIES, ge=1)


class RunSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(default="run", min_length=1)
    master_seed: Seed = Field(default=0)
    output_dir: Optional[str] = Field(default=None, description="Artifact directory; defaults to <output root>/<name>")
    precision: Precision = Field(default=Precision.FLOAT64)
    checks: bool = Field(default=False, description="Record reconstruction, aggregation and reset errors")
    record_wall_clock: bool = Field(default=False, description="Fill the seconds column (breaks byte-identical traces)")
    element_width: int = Field(default=8, description="Bytes per parameter in cost reports", ge=1)


# ── Run configuration ──────────────────────────────────────────────

SECTIONS = ("task", "federation", "sketch", "optimizer", "lora", "partition", "run")
_COMMENT = re.compile(r"(?:^|(?<=\s))#")


class RunConfig(BaseModel):
    """Everything one experiment run depends on."""
    model_config = ConfigDict(extra="forbid")

    task: TaskConfig = Field(default_factory=TaskConfig)
    federation: FederationSection = Field(default_factory=FederationSection)
    sketch: SketchSection = Field(default_factory=SketchSection)
    optimizer: OptimizerSection = Field(default_factory=OptimizerSection)
    lora: LoraSection = Field(default_factory=LoraSection)
    partition: PartitionSection = Field(default_factory=PartitionSection)
    run: RunSection = Field(default_factory=RunSection)

    @model_validator(mode="after")
    def _cross_checks(self) -> "RunConfig":
        fed = self.federation
        if fed.enforce_budget and fed.intervals * fed.interval_length != fed.local_iterations:
            raise InvalidConfigurationError(
                f"intervals * interval_length = {fed.intervals * fed.interval_length} "
                f"but the budget is {fed.local_iterations} (set federation.enforce_budget = false to override)",
                field="federation.intervals",
            )

        widths = [d_n for _, d_n in self.layer_shapes()]
        if self.sketch.kind == SketchKind.ROW_ORTHONORMAL_SCALED and self.sketch.rank > min(widths):
            raise InvalidConfigurationError(
                f"rank {self.sketch.rank} exceeds layer width {min(widths)} for row_orthonormal_scaled",
                field="sketch.rank",
            )
        if fed.method in (Method.FEDIT, Method.FFA_LORA):
            limit = min(min(shape) for shape in self.layer_shapes())
            if self.lora.rank > limit:
                raise InvalidConfigurationError(f"rank {self.lora.rank} exceeds {limit}", field="lora.rank")

        if self.partition.mode == PartitionMode.DIRICHLET:
            if self.partition.alpha is None:
                raise InvalidConfigurationError("dirichlet mode requires alpha", field="partition.alpha")
            if not self.task.is_classification:
                raise InvalidConfigurationError(
                    "dirichlet partitioning needs a labelled (logistic or mlp) task", field="partition.mode"
                )
            if self.task.heterogeneity > 0:
                raise InvalidConfigurationError("planted heterogeneity needs iid partitioning", field="partition.mode")
        if self.task.num_examples < fed.num_clients:
            raise InvalidConfigurationError(
                f"{self.task.num_examples} examples for {fed.num_clients} clients", field="task.num_examples"
            )
        return self

    # ── Derived views ──────────────────────────────────────────────

    def layer_shapes(self) -> list[tuple[int, int]]:
        t = self.task
        if t.variant == TaskVariant.MLP:
            return [(t.hidden_dim, t.input_dim), (t.output_dim, t.hidden_dim)]
        return [(t.output_dim, t.input_dim)]

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.run.precision.value)

    def local_config(self) -> LocalConfig:
        fed, opt = self.federation, self.optimizer
        return LocalConfig(
            intervals=fed.intervals,
            interval_length=fed.interval_length,
            learning_rate=opt.learning_rate,
            beta1=opt.beta1,
            beta2=opt.beta2,
            epsilon=opt.epsilon,
            momentum_enabled=opt.momentum_enabled,
            standard_bias_correction=opt.standard_bias_correction,
            batch_size=opt.batch_size,
            rank=self.sketch.rank,
            sketch_kind=self.sketch.kind,
        )

    def schedule(self) -> LearningRateSchedule:
        fed = self.federation
        return LearningRateSchedule(
            kind=self.optimizer.schedule,
            base_lr=self.optimizer.learning_rate,
            total_steps=fed.rounds * fed.intervals * fed.interval_length,
            min_ratio=self.optimizer.min_lr_ratio,
        )

    def partition_spec(self) -> PartitionSpec:
        return PartitionSpec(
            mode=self.partition.mode,
            alpha=self.partition.alpha,
            num_clients=self.federation.num_clients,
            seed=derive_seed(self.run.master_seed, "partition"),
            max_retries=self.partition.max_retries,
        )

    def with_updates(self, updates: dict[str, Any]) -> "RunConfig":
        """Copy with dotted-key overrides applied, fully revalidated."""
        data = self.model_dump(mode="json")
        for key, value in updates.items():
            section, _, name = key.partition(".")
            if section not in data or not name:
                raise InvalidConfigurationError("unknown key", field=key)
            data[section][name] = value
        try:
            return RunConfig.model_validate(data)
        except ValidationError as e:
            raise validation_to_config_error(e) from None

    def to_flat(self) -> str:
        """Render in the flat file format; parse_run_config(to_flat()) round-trips."""
        lines = []
        for section, values in self.model_dump(mode="json").items():
            for key, value in values.items():
                if value is None:
                    continue
                if isinstance(value, bool):
                    value = str(value).lower()
                lines.append(f"{section}.{key} = {value}")
        return "\n".join(lines) + "\n"


# ── Flat file format ───────────────────────────────────────────────

def parse_flat(text: str, sections: tuple[str, ...]) -> tuple[dict[str, dict[str, str]], dict[str, int]]:
    """Parse `section.key = value` lines into nested string values plus a key → line map.

    `#` starts a comment at the beginning of a line or after whitespace; elsewhere
    it is part of the value, so `run.name = a#b` keeps the name `a#b`.
    """
    nested: dict[str, dict[str, str]] = {}
    lines: dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = _COMMENT.split(raw, maxsplit=1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise InvalidConfigurationError("expected 'section.key = value'", line=number)
        section, dot, name = key.partition(".")
        if not dot or not name:
            raise InvalidConfigurationError("keys take the form section.key", field=key, line=number)
        if section not in sections:
            raise InvalidConfigurationError(f"unknown section (expected one of {', '.join(sections)})", field=key, line=number)
        if key in lines:
            raise InvalidConfigurationError(f"duplicate key (first set on line {lines[key]})", field=key, line=number)
        if not value:
            raise InvalidConfigurationError("missing value", field=key, line=number)
        nested.setdefault(section, {})[name] = value
        lines[key] = number
    return nested, lines


def parse_run_config(text: str) -> RunConfig:
    nested, lines = parse_flat(text, SECTIONS)
    try:
        return RunConfig.model_validate(nested)
    except ValidationError as e:
        raise validation_to_config_error(e, lines) from None


def _read(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InvalidConfigurationError(f"cannot read {path}: {e.strerror or e}") from None
    except UnicodeDecodeError as e:
        raise InvalidConfigurationError(f"{path} is not valid UTF-8 (byte {e.start})") from None


def load_run_config(path: str | Path) -> RunConfig:
    return parse_run_config(_read(path))


# ── Sweep grid ─────────────────────────────────────────────────────

class GridSpec(BaseModel):
    """Value lists for a cross-product sweep; absent axes keep the base config value."""
    model_config = ConfigDict(extra="forbid")

    J: Optional[list[int]] = Field(default=None, description="Interval lengths")
    K: Optional[list[int]] = Field(default=None, description="Seeds per round")
    alpha: Optional[list[str]] = Field(default=None, description="Dirichlet α values or 'iid'")
    method: Optional[list[Method]] = Field(default=None)
    r: Optional[list[int]] = Field(default=None, description="Sketch rank (LoRA rank for LoRA methods)")
    repeats: int = Field(default=1, description="Master sub-seeds per grid point", ge=1)

    @model_validator(mode="after")
    def _check_values(self) -> "GridSpec":
        for axis in ("J", "K", "r"):
            values = getattr(self, axis)
            if values is not None and (not values or min(values) < 1):
                raise InvalidConfigurationError("values must be positive integers", field=f"grid.{axis}")
        for value in self.alpha or []:
            if value.lower() != "iid":
                try:
                    ok = float(value) > 0
                except ValueError:
                    ok = False
                if not ok:
                    raise InvalidConfigurationError(f"{value!r} is neither 'iid' nor a positive number", field="grid.alpha")
        return self

    @property
    def axes(self) -> list[str]:
        return [a for a in ("method", "K", "J", "r", "alpha") if getattr(self, a) is not None]


def parse_grid(text: str) -> GridSpec:
    nested, lines = parse_flat(text, ("grid",))
    values: dict[str, Any] = {}
    for key, raw in nested.get("grid", {}).items():
        values[key] = raw if key == "repeats" else [v.strip() for v in raw.split(",") if v.strip()]
    try:
        return GridSpec.model_validate(values)
    except ValidationError as e:
        first = e.errors()[0]
        loc = first.get("loc", ())
        field = f"grid.{loc[0]}" if loc else None
        original = (first.get("ctx") or {}).get("error")
        if isinstance(original, InvalidConfigurationError):
            raise InvalidConfigurationError(original.message, field=original.field, line=lines.get(original.field)) from None
        raise InvalidConfigurationError(first.get("msg", "invalid value"), field=field, line=lines.get(field)) from None


def load_grid(path: str | Path) -> GridSpec:
    return parse_grid(_read(path))
