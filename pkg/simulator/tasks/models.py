"""Domain types for synthetic federated tasks."""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from shared.errors import InvalidArgumentError

# A WeightSet is an ordered list of dense matrices W_ℓ (d_m(ℓ) x d_n(ℓ)).
WeightSet = list[np.ndarray]


class TaskVariant(str, Enum):
    """Synthetic objective family."""
    QUADRATIC = "quadratic"
    LOGISTIC = "logistic"
    MLP = "mlp"


class TaskConfig(BaseModel):
    """Data-generation and shape parameters of a synthetic task."""
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    variant: TaskVariant = Field(default=TaskVariant.QUADRATIC, description="quadratic, logistic or mlp")
    input_dim: int = Field(default=16, description="Feature width d_n of the first layer", ge=1)
    output_dim: int = Field(
        default=8,
        description="Regression target width (quadratic) or class count (logistic, mlp)",
        ge=1,
    )
    hidden_dim: int = Field(default=16, description="Hidden width of the two-layer MLP", ge=1)
    planted_rank: int = Field(default=4, description="Rank of the planted ground-truth weights", ge=1)
    signal_strength: float = Field(default=3.0, description="Singular value of the planted weights", gt=0)
    label_noise: float = Field(default=0.0, description="Std of additive target noise (quadratic)", ge=0)
    num_examples: int = Field(default=2000, description="Examples generated in total", ge=1)
    heterogeneity: float = Field(
        default=0.0,
        description="Frobenius norm of per-client optimum perturbations (quadratic only)",
        ge=0,
    )
    init_scale: float = Field(default=0.1, description="Std of the initial weights W^0", ge=0)

    @model_validator(mode="after")
    def _check_shapes(self) -> "TaskConfig":
        if self.variant in (TaskVariant.LOGISTIC, TaskVariant.MLP) and self.output_dim < 2:
            raise ValueError("classification tasks need output_dim >= 2 classes")
        if self.heterogeneity > 0 and self.variant != TaskVariant.QUADRATIC:
            raise ValueError("planted heterogeneity is only defined for the quadratic task")
        return self

    @property
    def is_classification(self) -> bool:
        return self.variant != TaskVariant.QUADRATIC


@dataclass(frozen=True)
class Batch:
    """A mini-batch ξ: feature rows plus targets (float rows or int labels)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2:
            raise InvalidArgumentError(f"batch inputs must be 2-D, got shape {self.inputs.shape}")
        if self.inputs.shape[0] < 1:
            raise InvalidArgumentError("batch size must be >= 1")
        if self.targets.shape[0] != self.inputs.shape[0]:
            raise InvalidArgumentError(
                f"{self.inputs.shape[0]} input rows but {self.targets.shape[0]} targets"
            )

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class Dataset:
    """A labelled or unlabelled table of examples; client shards are Datasets too."""

    inputs: np.ndarray
    targets: np.ndarray
    labels: Optional[np.ndarray] = None
    num_classes: int = 0

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            inputs=self.inputs[indices],
            targets=self.targets[indices],
            labels=None if self.labels is None else self.labels[indices],
            num_classes=self.num_classes,
        )

    def as_batch(self) -> Batch:
        return Batch(inputs=self.inputs, targets=self.targets)

    def astype(self, dtype) -> "Dataset":
        targets = self.targets if self.has_labels else self.targets.astype(dtype)
        return Dataset(self.inputs.astype(dtype), targets, self.labels, self.num_classes)
