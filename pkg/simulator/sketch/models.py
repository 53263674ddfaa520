"""Domain types for seeded projection matrices."""

from dataclasses import dataclass
from enum import Enum
from typing import Annotated

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

Seed = Annotated[int, Field(ge=0, le=(1 << 64) - 1, description="64-bit unsigned seed")]


class SketchKind(str, Enum):
    """Distribution a projection matrix is drawn from."""
    GAUSSIAN = "gaussian"
    ROW_ORTHONORMAL_SCALED = "row_orthonormal_scaled"


class SeedPool(BaseModel):
    """The K seeds the server broadcasts for one round."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    round: int = Field(..., description="Round index t the pool belongs to", ge=0)
    seeds: tuple[Seed, ...] = Field(..., description="Ordered seeds s_1..s_K", min_length=1)

    @property
    def K(self) -> int:
        return len(self.seeds)


@dataclass(frozen=True)
class ProjectionMatrix:
    """An r x d_n sketch matrix regenerated from (seed, layer_index)."""

    entries: np.ndarray
    kind: SketchKind
    seed: int
    layer_index: int = 0

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def r(self) -> int:
        return self.entries.shape[0]

    @property
    def d_n(self) -> int:
        return self.entries.shape[1]

    @property
    def T(self) -> np.ndarray:
        return self.entries.T
