"""Evaluation-only shadow model, kept outside the protocol path."""

import logging
from typing import Optional, Sequence

import numpy as np

from shared.errors import DivergedError
from shared.linalg import copy_weights, frobenius_sq, relative_error
from simulator.federation.models import GlobalAccumulatorSet
from simulator.federation.protocol import reconstruct_global
from simulator.sketch.models import SeedPool, SketchKind
from simulator.tasks.models import Dataset, WeightSet
from simulator.tasks.objectives import TaskModel, global_loss_and_grad

logger = logging.getLogger(__name__)


class ShadowEvaluator:
    """Holds a full-weight copy of the global model and measures F and ‖∇F‖² on full shards."""

    def __init__(
        self,
        model: TaskModel,
        shards: Sequence[Dataset],
        W0: WeightSet,
        rank: Optional[int] = None,
        kind: SketchKind = SketchKind.GAUSSIAN,
    ):
        self.model = model
        self.shards = list(shards)
        self.W = copy_weights(W0)
        self.rank = rank
        self.kind = kind

    def evaluate(self, W: Optional[WeightSet] = None, round: Optional[int] = None) -> tuple[float, float]:
        """(F(W), ‖∇F(W)‖_F²); the shadow model when W is omitted."""
        value, gradient = global_loss_and_grad(self.model, self.W if W is None else W, self.shards)
        norm_sq = frobenius_sq(gradient)
        if not (np.isfinite(value) and np.isfinite(norm_sq)):
            raise DivergedError("non-finite global loss", round=round)
        return float(value), norm_sq

    def advance(self, B: GlobalAccumulatorSet, pool: SeedPool) -> WeightSet:
        """Apply the global update W ← W + Σ_k B_k P_k for the round `pool` belongs to."""
        reconstruct_global(self.W, B, pool, rank=self.rank, kind=self.kind, inplace=True)
        return self.W

    def set_weights(self, W: WeightSet) -> None:
        self.W = copy_weights(W)

    def reconstruction_error(self, W_client: WeightSet) -> float:
        return relative_error(W_client, self.W)
