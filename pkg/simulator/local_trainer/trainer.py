"""Local training over I intervals of J iterations in random subspaces.

Each interval samples one seed from the round's pool, regenerates its
projection P_k, zeroes the moments and runs J iterations of

    G_B ← ∇f(W; ξ)·P_kᵀ          (compressed, via the task's factored path)
    G_B ← moment_step(G_B)
    W   ← W − η G_B P_k          (in place, row blocks)
    B_k ← B_k − η G_B

in that order. At the end W ← W − Σ_k B_k P_k restores the entry model.
"""

import logging
from collections import Counter
from typing import Callable, Optional, Sequence

import numpy as np

from config.settings import settings
from shared.errors import DivergedError, InvalidArgumentError, InvalidConfigurationError
from shared.linalg import apply_low_rank_update_, copy_weights, relative_error
from shared.rng import derive_rng
from simulator.local_trainer.models import (
    LearningRateSchedule,
    LocalAccumulatorSet,
    LocalConfig,
    LocalTrainingResult,
    MomentState,
)
from simulator.sketch.generator import gen_projection
from simulator.sketch.models import SeedPool
from simulator.tasks.data import BatchSampler
from simulator.tasks.models import Batch, Dataset, WeightSet
from simulator.tasks.objectives import TaskModel

logger = logging.getLogger(__name__)


def moment_step(state: MomentState, G_B: Sequence[np.ndarray], cfg: LocalConfig) -> list[np.ndarray]:
    """Update M and V in place and return the preconditioned gradient.

    Default divisors are the fixed 1−β1 and 1−β2; with
    `standard_bias_correction` they become 1−β1^t and 1−β2^t.
    """
    if not cfg.momentum_enabled:
        return list(G_B)
    state.check(G_B)
    state.step += 1
    if cfg.standard_bias_correction:
        c1 = 1.0 - cfg.beta1**state.step
        c2 = 1.0 - cfg.beta2**state.step
    else:
        c1 = 1.0 - cfg.beta1
        c2 = 1.0 - cfg.beta2

    out = []
    for M, V, g in zip(state.M, state.V, G_B):
        M *= cfg.beta1
        M += (1.0 - cfg.beta1) * g
        V *= cfg.beta2
        V += (1.0 - cfg.beta2) * (g * g)
        out.append((M / c1) / (np.sqrt(V / c2) + cfg.epsilon))
    return out


def local_step(
    model: TaskModel,
    W: list[np.ndarray],
    P: Sequence[np.ndarray],
    batch: Batch,
    state: MomentState,
    block: list[np.ndarray],
    lr: float,
    cfg: LocalConfig,
    block_rows: int = settings.block_rows,
) -> list[np.ndarray]:
    """One local iteration; mutates W, the moments and the accumulator block."""
    G_B = model.grad_B(W, P, batch)
    if not all(np.all(np.isfinite(g)) for g in G_B):
        raise DivergedError("non-finite compressed gradient")
    G_B = moment_step(state, G_B, cfg)
    for w, g, p, b in zip(W, G_B, P, block):
        apply_low_rank_update_(w, g, p, scale=-lr, block_rows=block_rows)
        b -= lr * g
    return G_B


def peak_state_parameter_count(
    cfg: Optional[LocalConfig], layer_shapes: Sequence[tuple[int, int]], r: int
) -> int:
    """Peak parameter count of one local iteration, summed over layers.

    Per layer: d_m·d_n + (d_m + d_n)·r for W, G_B and P, plus 3·d_m·r for
    G_B and the two moments (1·d_m·r without momentum).
    """
    if r < 1:
        raise InvalidConfigurationError(f"r must be >= 1, got {r}", field="sketch.rank")
    state_blocks = 3 if cfg is None or cfg.momentum_enabled else 1
    total = 0
    for d_m, d_n in layer_shapes:
        total += d_m * d_n + (d_m + d_n) * r + state_blocks * d_m * r
    return total


class LocalTrainer:
    """Runs local training for one task model and configuration."""

    def __init__(self, model: TaskModel, cfg: LocalConfig, block_rows: int = settings.block_rows):
        self.model = model
        self.cfg = cfg
        self.block_rows = block_rows
        self.block_shapes = tuple((d_m, cfg.rank) for d_m, _ in model.layer_shapes)

    def projections(self, seed: int, dtype=np.float64) -> list[np.ndarray]:
        return [
            gen_projection(seed, self.cfg.rank, d_n, self.cfg.sketch_kind, layer, dtype=dtype).entries
            for layer, (_, d_n) in enumerate(self.model.layer_shapes)
        ]

    def train(
        self,
        W: list[np.ndarray],
        pool: SeedPool,
        shard: Dataset,
        *,
        sampler: Optional[BatchSampler] = None,
        seed_rng: Optional[np.random.Generator] = None,
        schedule: Optional[Callable[[int], float]] = None,
        step_offset: int = 0,
        client_id: int = 0,
        round: Optional[int] = None,
        debug: bool = False,
    ) -> LocalTrainingResult:
        """Train in place on W and restore it before returning."""
        if len(shard) == 0:
            raise InvalidArgumentError(f"client {client_id}: shard is empty")
        self.model.check_weights(W)
        cfg = self.cfg
        round = pool.round if round is None else round
        sampler = sampler or BatchSampler(shard, cfg.batch_size, derive_rng(0, "batches", client_id, round))
        seed_rng = seed_rng or derive_rng(0, "seed-choice", client_id, round)
        lr_at = schedule or (lambda _step: cfg.learning_rate)
        dtype = W[0].dtype

        entry = copy_weights(W) if debug else None
        blocks: dict[int, list[np.ndarray]] = {}
        projections: dict[int, list[np.ndarray]] = {}
        usage: Counter = Counter()
        state = MomentState.zeros(self.block_shapes, dtype=dtype)

        step = 0
        for interval in range(cfg.intervals):
            k = int(seed_rng.integers(pool.K))
            usage[k] += 1
            if k not in projections:
                projections[k] = self.projections(pool.seeds[k], dtype=dtype)
            P = projections[k]
            block = blocks.setdefault(k, [np.zeros(s, dtype=dtype) for s in self.block_shapes])
            state.reset()
            logger.debug(f"client {client_id} round {round}: interval {interval} uses seed index {k}")

            for _ in range(cfg.interval_length):
                try:
                    local_step(
                        self.model, W, P, sampler.next_batch(), state, block,
                        lr_at(step_offset + step), cfg, self.block_rows,
                    )
                except DivergedError as e:
                    e.iteration = step
                    raise e.at(round=round, client_id=client_id)
                step += 1

        pre_reset = copy_weights(W) if debug else None
        for k, block in blocks.items():
            for w, b, p in zip(W, block, projections[k]):
                apply_low_rank_update_(w, b, p, scale=-1.0, block_rows=self.block_rows)
        if not all(np.all(np.isfinite(w)) for w in W):
            raise DivergedError("non-finite weights after reset", iteration=step - 1).at(round=round, client_id=client_id)

        result = LocalTrainingResult(
            accumulators=LocalAccumulatorSet(
                client_id=client_id,
                round=round,
                K=pool.K,
                block_shapes=self.block_shapes,
                blocks={k: tuple(v) for k, v in sorted(blocks.items())},
            ),
            seed_usage=dict(sorted(usage.items())),
        )
        if debug:
            change = [pre - ent for pre, ent in zip(pre_reset, entry)]
            encoded = [np.zeros_like(w) for w in W]
            for k, block in blocks.items():
                for enc, b, p in zip(encoded, block, projections[k]):
                    enc += b @ p
            result.pre_reset_weights = pre_reset
            result.reset_error = relative_error(W, entry)
            result.completeness_error = relative_error(change, encoded)
        return result


def local_training(
    model: TaskModel,
    W: list[np.ndarray],
    pool: SeedPool,
    shard: Dataset,
    cfg: LocalConfig,
    K: Optional[int] = None,
    *,
    master_seed: int = 0,
    client_id: int = 0,
    schedule: Optional[LearningRateSchedule] = None,
    step_offset: int = 0,
) -> LocalAccumulatorSet:
    """Train on W (restored on return) and return the client's accumulators."""
    if K is not None and K != pool.K:
        raise InvalidArgumentError(f"pool holds {pool.K} seeds but K={K}")
    if len(shard) == 0:
        raise InvalidArgumentError(f"client {client_id}: shard is empty")
    trainer = LocalTrainer(model, cfg)
    result = trainer.train(
        W,
        pool,
        shard,
        sampler=BatchSampler(shard, cfg.batch_size, derive_rng(master_seed, "batches", client_id, pool.round)),
        seed_rng=derive_rng(master_seed, "seed-choice", client_id, pool.round),
        schedule=schedule,
        step_offset=step_offset,
        client_id=client_id,
    )
    return result.accumulators


def shadow_sgd_path(
    model: TaskModel, W: WeightSet, sampler: BatchSampler, steps: int, lr: float
) -> list[WeightSet]:
    """Plain full-gradient SGD iterates, used as a reference path."""
    W = copy_weights(W)
    path = [copy_weights(W)]
    for _ in range(steps):
        for w, g in zip(W, model.grad(W, sampler.next_batch())):
            w -= lr * g
        path.append(copy_weights(W))
    return path
