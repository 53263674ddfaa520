"""Domain types for client data partitioning."""

import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from simulator.sketch.models import Seed
from simulator.tasks.models import Dataset

MAX_PARTITION_RETRIES = 16


class PartitionMode(str, Enum):
    """How examples are assigned to clients."""
    IID = "iid"
    DIRICHLET = "dirichlet"


class PartitionSpec(BaseModel):
    """Partitioning parameters; alpha is only read in dirichlet mode."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: PartitionMode = Field(default=PartitionMode.IID, description="'iid' or 'dirichlet'")
    alpha: Optional[float] = Field(default=None, description="Dirichlet concentration α", gt=0)
    num_clients: int = Field(..., description="Client count N", ge=1)
    seed: Seed = Field(default=0, description="Partition seed")
    max_retries: int = Field(default=MAX_PARTITION_RETRIES, description="Resampling attempts for empty shards", ge=1)

    @model_validator(mode="after")
    def _alpha_for_dirichlet(self) -> "PartitionSpec":
        if self.mode == PartitionMode.DIRICHLET and self.alpha is None:
            raise ValueError("dirichlet mode requires alpha")
        return self


@dataclass(frozen=True)
class Partition:
    """Shard assignment as sorted index arrays, one per client."""

    spec: PartitionSpec
    indices: tuple[np.ndarray, ...]
    attempts: int = 1

    def __post_init__(self):
        for idx in self.indices:
            idx.setflags(write=False)

    @property
    def sizes(self) -> list[int]:
        return [int(idx.size) for idx in self.indices]

    def shards(self, dataset: Dataset) -> list[Dataset]:
        return [dataset.subset(idx) for idx in self.indices]

    def to_json(self) -> str:
        payload = {
            "spec": self.spec.model_dump(mode="json"),
            "attempts": self.attempts,
            "indices": [idx.tolist() for idx in self.indices],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Partition":
        payload = json.loads(text)
        return cls(
            spec=PartitionSpec.model_validate(payload["spec"]),
            indices=tuple(np.asarray(idx, dtype=np.int64) for idx in payload["indices"]),
            attempts=int(payload.get("attempts", 1)),
        )


class HeterogeneityReport(BaseModel):
    """Per-client label histograms and total-variation distance from the pooled histogram."""
    model_config = ConfigDict(extra="forbid")

    num_classes: int
    histograms: list[list[int]]
    global_histogram: list[int]
    tv_distances: list[float]
    mean_tv: float

    def to_markdown(self) -> str:
        md = f"## Label heterogeneity\n\n**Mean TV distance:** {self.mean_tv:.4f}\n\n"
        md += "| Client | Size | TV | Histogram |\n"
        md += "|--------|------|----|-----------|\n"
        for client, (hist, tv) in enumerate(zip(self.histograms, self.tv_distances)):
            md += f"| {client} | {sum(hist)} | {tv:.4f} | {' '.join(str(c) for c in hist)} |\n"
        md += f"| **all** | **{sum(self.global_histogram)}** | | {' '.join(str(c) for c in self.global_histogram)} |\n"
        return md
