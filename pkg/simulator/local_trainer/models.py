"""Domain types for memory-efficient local training."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from shared.errors import InvalidArgumentError
from simulator.sketch.models import SketchKind


class ScheduleKind(str, Enum):
    """Learning-rate schedule across all local iterations of a run."""
    CONSTANT = "constant"
    COSINE = "cosine"


class LocalConfig(BaseModel):
    """Inputs of one client's local training call."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    intervals: int = Field(default=5, description="Interval count I", ge=1)
    interval_length: int = Field(default=20, description="Iterations per interval J", ge=1)
    learning_rate: float = Field(default=0.05, description="Step size η (0 freezes the model)", ge=0)
    beta1: float = Field(default=0.9, description="First-moment decay β1", ge=0, lt=1)
    beta2: float = Field(default=0.999, description="Second-moment decay β2", ge=0, lt=1)
    epsilon: float = Field(default=1e-8, description="Moment stabilizer ε", gt=0)
    momentum_enabled: bool = Field(default=True, description="Precondition G_B with the M/V moments")
    standard_bias_correction: bool = Field(
        default=False,
        description="Divide by 1-β^t (time-indexed) instead of the fixed 1-β divisors",
    )
    batch_size: int = Field(default=16, description="Mini-batch size; >= shard size means full batch", ge=1)
    rank: int = Field(default=4, description="Sketch rank r", ge=1)
    sketch_kind: SketchKind = Field(default=SketchKind.GAUSSIAN, description="Projection distribution")

    @property
    def local_iterations(self) -> int:
        return self.intervals * self.interval_length


class LearningRateSchedule(BaseModel):
    """η as a function of the global local-iteration index."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ScheduleKind = Field(default=ScheduleKind.CONSTANT)
    base_lr: float = Field(..., ge=0)
    total_steps: int = Field(default=1, ge=1)
    min_ratio: float = Field(default=0.0, ge=0, le=1)

    def __call__(self, step: int) -> float:
        if self.kind == ScheduleKind.CONSTANT:
            return self.base_lr
        progress = min(max(step, 0), self.total_steps) / self.total_steps
        cosine = 0.5 * (1.0 + math.cos(math.pi * progress))
        return self.base_lr * (self.min_ratio + (1.0 - self.min_ratio) * cosine)


@dataclass
class MomentState:
    """First and second moments of G_B, one d_m x r block per layer."""

    M: list[np.ndarray]
    V: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, block_shapes, dtype=np.float64) -> "MomentState":
        return cls(
            M=[np.zeros(s, dtype=dtype) for s in block_shapes],
            V=[np.zeros(s, dtype=dtype) for s in block_shapes],
        )

    def reset(self) -> None:
        for m, v in zip(self.M, self.V):
            m.fill(0.0)
            v.fill(0.0)
        self.step = 0

    def check(self, G_B) -> None:
        if len(G_B) != len(self.M):
            raise InvalidArgumentError(f"{len(G_B)} gradient blocks for {len(self.M)} moment blocks")
        for i, (g, m) in enumerate(zip(G_B, self.M)):
            if g.shape != m.shape:
                raise InvalidArgumentError(
                    f"layer {i}: compressed gradient {g.shape} does not match moment shape {m.shape}"
                )


@dataclass(frozen=True)
class LocalAccumulatorSet:
    """Per-seed accumulators B_{k,n} of one client; only touched seeds are stored."""

    client_id: int
    round: int
    K: int
    block_shapes: tuple[tuple[int, int], ...]
    blocks: Mapping[int, tuple[np.ndarray, ...]]

    def __post_init__(self):
        for k, layers in self.blocks.items():
            if not 0 <= k < self.K:
                raise InvalidArgumentError(f"seed index {k} outside [0, {self.K})")
            for b in layers:
                b.setflags(write=False)

    @property
    def touched(self) -> frozenset[int]:
        return frozenset(self.blocks)

    @property
    def params_per_block(self) -> int:
        return sum(d_m * r for d_m, r in self.block_shapes)

    @property
    def uplink_params(self) -> int:
        return len(self.blocks) * self.params_per_block

    def dense_block(self, k: int) -> tuple[np.ndarray, ...]:
        """B_{k,n}, zero-filled when seed k was never sampled."""
        if k in self.blocks:
            return self.blocks[k]
        return tuple(np.zeros(s) for s in self.block_shapes)


@dataclass
class LocalTrainingResult:
    """Accumulators plus diagnostics of one local training call."""

    accumulators: LocalAccumulatorSet
    seed_usage: dict[int, int] = field(default_factory=dict)
    pre_reset_weights: Optional[list[np.ndarray]] = None
    reset_error: Optional[float] = None
    completeness_error: Optional[float] = None
