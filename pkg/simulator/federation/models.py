"""Protocol messages, global accumulators and the per-round training trace."""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from simulator.local_trainer.models import LocalAccumulatorSet
from simulator.sketch.models import SeedPool
from simulator.tasks.models import Dataset, WeightSet

TRACE_COLUMNS = ["round", "global_loss", "grad_norm_sq", "uplink_params", "downlink_params", "seconds"]


@dataclass(frozen=True)
class GlobalAccumulatorSet:
    """B_k for every k ∈ [K]; `round` is the round whose pool the blocks refer to (-1 before any round)."""

    round: int
    K: int
    block_shapes: tuple[tuple[int, int], ...]
    blocks: tuple[tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        for layers in self.blocks:
            for b in layers:
                b.setflags(write=False)

    @classmethod
    def zeros(cls, K: int, block_shapes, round: int = -1, dtype=np.float64) -> "GlobalAccumulatorSet":
        block_shapes = tuple(tuple(s) for s in block_shapes)
        return cls(
            round=round,
            K=K,
            block_shapes=block_shapes,
            blocks=tuple(tuple(np.zeros(s, dtype=dtype) for s in block_shapes) for _ in range(K)),
        )

    @property
    def is_initial(self) -> bool:
        return self.round < 0

    @property
    def params_per_block(self) -> int:
        return sum(d_m * r for d_m, r in self.block_shapes)

    def is_zero(self) -> bool:
        return all(not np.any(b) for layers in self.blocks for b in layers)


@dataclass(frozen=True)
class Downlink:
    """Server → client message of round t: the pool S^t and the accumulators B^t."""

    round: int
    pool: SeedPool
    accumulators: GlobalAccumulatorSet

    @property
    def params(self) -> int:
        # K·Q accumulator entries plus K seed scalars
        return self.accumulators.K * self.accumulators.params_per_block + self.pool.K


@dataclass(frozen=True)
class Uplink:
    """Client → server message: only the touched blocks, tagged with their seed index."""

    accumulators: LocalAccumulatorSet

    @property
    def client_id(self) -> int:
        return self.accumulators.client_id

    @property
    def params(self) -> int:
        return self.accumulators.uplink_params


@dataclass
class ClientState:
    """What one client holds between rounds."""

    client_id: int
    W: WeightSet
    shard: Dataset
    prev_pool: Optional[SeedPool] = None


class RoundRecord(BaseModel):
    """Metrics of one completed round, measured at the end-of-round global model."""
    model_config = ConfigDict(extra="forbid")

    round: int = Field(..., ge=0)
    global_loss: float
    grad_norm_sq: float
    uplink_params: int = Field(..., description="Summed over clients")
    downlink_params: int = Field(..., description="Per client")
    seconds: float = 0.0
    client_uplinks: list[int] = Field(default_factory=list)
    seed_usage: dict[int, int] = Field(default_factory=dict, description="Intervals per seed index, all clients")
    reconstruction_error: Optional[float] = Field(default=None, description="Max over clients vs. the shadow model")
    aggregation_error: Optional[float] = Field(default=None, description="Global model vs. mean of pre-reset models")
    reset_error: Optional[float] = Field(default=None, description="Max over clients")
    completeness_error: Optional[float] = Field(default=None, description="Max over clients")


@dataclass
class TrainingTrace:
    """One record per completed round plus the metrics of the initial model."""

    method: str
    initial_loss: float
    initial_grad_norm_sq: float
    records: list[RoundRecord] = field(default_factory=list)
    final_weights: Optional[WeightSet] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final_loss(self) -> float:
        return self.records[-1].global_loss if self.records else self.initial_loss

    @property
    def losses(self) -> list[float]:
        return [r.global_loss for r in self.records]

    @property
    def grad_norms_sq(self) -> list[float]:
        return [r.grad_norm_sq for r in self.records]

    def running_grad_norm_avg(self, rounds: int) -> float:
        """Mean of ‖∇F‖² over the models W^0..W^{rounds-1}."""
        values = [self.initial_grad_norm_sq] + self.grad_norms_sq
        if not 1 <= rounds <= len(values):
            raise ValueError(f"rounds must be in [1, {len(values)}], got {rounds}")
        return float(np.mean(values[:rounds]))

    def to_csv(self, path: str | Path | None = None) -> str:
        """CSV text with one row per round; floats use 17 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.records:
            writer.writerow([
                r.round,
                format(r.global_loss, ".17g"),
                format(r.grad_norm_sq, ".17g"),
                r.uplink_params,
                r.downlink_params,
                format(r.seconds, ".17g"),
            ])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def summary(self) -> dict:
        return {
            "method": self.method,
            "rounds": len(self.records),
            "initial_loss": self.initial_loss,
            "initial_grad_norm_sq": self.initial_grad_norm_sq,
            "final_loss": self.final_loss,
            "final_grad_norm_sq": self.records[-1].grad_norm_sq if self.records else self.initial_grad_norm_sq,
            "total_uplink_params": sum(r.uplink_params for r in self.records),
            "total_downlink_params": sum(r.downlink_params for r in self.records),
            "total_seconds": sum(r.seconds for r in self.records),
        }
