"""Differentiable synthetic objectives with exact loss and gradient oracles.

Every task exposes three oracles on a mini-batch:

- loss(W, batch)
- grad(W, batch): the full gradient ∇f(W; ξ), one matrix per layer
- grad_B(W, P, batch): the compressed gradient ∇f(W; ξ)·Pᵀ, i.e. the
  gradient of f(W + B P) in B at B = 0. It is computed through the
  backward pass as (upstream error)ᵀ·(layer input · Pᵀ), so no
  d_m x d_n intermediate is ever formed.
"""

import logging
from abc import ABC, abstractmethod
from typing import NamedTuple, Optional, Sequence

import numpy as np

from shared.errors import InvalidArgumentError
from shared.rng import derive_rng
from simulator.sketch.models import ProjectionMatrix
from simulator.tasks.models import Batch, Dataset, TaskConfig, TaskVariant, WeightSet

logger = logging.getLogger(__name__)


def _entries(p: ProjectionMatrix | np.ndarray) -> np.ndarray:
    return p.entries if isinstance(p, ProjectionMatrix) else np.asarray(p)


def _log_softmax_parts(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (softmax probabilities, log-sum-exp per row), computed stably."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    lse = np.log(total[:, 0]) + logits.max(axis=1)
    return exp / total, lse


class TaskModel(ABC):
    """A differentiable objective over one or more weight matrices."""

    variant: TaskVariant

    def __init__(self, layer_shapes: Sequence[tuple[int, int]]):
        self._layer_shapes = [tuple(int(d) for d in s) for s in layer_shapes]

    # ── Shapes ─────────────────────────────────────────────────────

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        return list(self._layer_shapes)

    @property
    def input_dim(self) -> int:
        return self._layer_shapes[0][1]

    def check_weights(self, W: Sequence[np.ndarray]) -> None:
        if len(W) != len(self._layer_shapes):
            raise InvalidArgumentError(f"expected {len(self._layer_shapes)} weight matrices, got {len(W)}")
        for i, (w, shape) in enumerate(zip(W, self._layer_shapes)):
            if w.shape != shape:
                raise InvalidArgumentError(f"layer {i}: expected shape {shape}, got {w.shape}")

    def check_batch(self, batch: Batch) -> None:
        if batch.inputs.shape[1] != self.input_dim:
            raise InvalidArgumentError(
                f"feature width {batch.inputs.shape[1]} does not match task input width {self.input_dim}"
            )

    def projections(self, P: Sequence[ProjectionMatrix | np.ndarray]) -> list[np.ndarray]:
        """Validate one sketch per layer and return the raw entries."""
        mats = [_entries(p) for p in P]
        if len(mats) != len(self._layer_shapes):
            raise InvalidArgumentError(f"expected {len(self._layer_shapes)} projections, got {len(mats)}")
        for i, (p, (_, d_n)) in enumerate(zip(mats, self._layer_shapes)):
            if p.ndim != 2 or p.shape[1] != d_n:
                raise InvalidArgumentError(f"layer {i}: projection shape {p.shape} does not match width {d_n}")
        return mats

    def _validate(self, W: Sequence[np.ndarray], batch: Batch) -> None:
        self.check_weights(W)
        self.check_batch(batch)

    def init_weights(self, rng: np.random.Generator, scale: float, dtype=np.float64) -> WeightSet:
        return [(rng.standard_normal(shape) * scale).astype(dtype) for shape in self._layer_shapes]

    # ── Oracles ────────────────────────────────────────────────────

    @abstractmethod
    def loss(self, W: Sequence[np.ndarray], batch: Batch) -> float: ...

    @abstractmethod
    def grad(self, W: Sequence[np.ndarray], batch: Batch) -> WeightSet: ...

    @abstractmethod
    def grad_B(
        self, W: Sequence[np.ndarray], P: Sequence[ProjectionMatrix | np.ndarray], batch: Batch
    ) -> WeightSet: ...

    def smoothness(self, batch: Batch) -> Optional[float]:
        """Lipschitz constant of the gradient on this batch, when known."""
        return None

    def per_example_variance(self, W: Sequence[np.ndarray], batch: Batch) -> float:
        """Mean over examples of ‖∇f(W; x_i) − ∇f(W; batch)‖_F²."""
        mean = self.grad(W, batch)
        total = 0.0
        for i in range(batch.size):
            single = Batch(batch.inputs[i : i + 1], batch.targets[i : i + 1])
            g = self.grad(W, single)
            total += sum(float(np.sum((a - b) ** 2)) for a, b in zip(g, mean))
        return total / batch.size


class _LinearTask(TaskModel):
    """Single-layer task whose gradient factors as Rᵀ X / b."""

    @abstractmethod
    def _residual(self, W: np.ndarray, batch: Batch) -> tuple[np.ndarray, float]:
        """Return (residual R of shape b x d_m, loss value)."""

    def loss(self, W, batch):
        self._validate(W, batch)
        return self._residual(W[0], batch)[1]

    def grad(self, W, batch):
        self._validate(W, batch)
        residual, _ = self._residual(W[0], batch)
        return [residual.T @ batch.inputs / batch.size]

    def grad_B(self, W, P, batch):
        self._validate(W, batch)
        (p,) = self.projections(P)
        residual, _ = self._residual(W[0], batch)
        sketched_inputs = batch.inputs @ p.T
        return [residual.T @ sketched_inputs / batch.size]

    def per_example_variance(self, W, batch):
        self._validate(W, batch)
        residual, _ = self._residual(W[0], batch)
        # ‖r_i x_iᵀ‖² = ‖r_i‖² ‖x_i‖²
        per_example_sq = np.sum(residual**2, axis=1) * np.sum(batch.inputs**2, axis=1)
        mean = residual.T @ batch.inputs / batch.size
        return float(np.mean(per_example_sq) - np.sum(mean**2))


class QuadraticTask(_LinearTask):
    """f(W; ξ) = (1/2b) Σ_i ‖W x_i − y_i‖²."""

    variant = TaskVariant.QUADRATIC

    def __init__(self, input_dim: int, output_dim: int):
        super().__init__([(output_dim, input_dim)])

    def _residual(self, W, batch):
        if batch.targets.ndim != 2 or batch.targets.shape[1] != W.shape[0]:
            raise InvalidArgumentError(f"targets shape {batch.targets.shape} does not match output width {W.shape[0]}")
        residual = batch.inputs @ W.T - batch.targets
        return residual, 0.5 * float(np.sum(residual**2)) / batch.size

    def smoothness(self, batch):
        gram = batch.inputs.T @ batch.inputs / batch.size
        return float(np.linalg.eigvalsh(gram)[-1])

    def minimizer(self, batch: Batch) -> WeightSet:
        """Closed-form least-squares minimizer on the batch."""
        solution, *_ = np.linalg.lstsq(batch.inputs, batch.targets, rcond=None)
        return [solution.T]


class LogisticTask(_LinearTask):
    """Multinomial logistic regression: mean cross-entropy of softmax(W x)."""

    variant = TaskVariant.LOGISTIC

    def __init__(self, input_dim: int, num_classes: int):
        super().__init__([(num_classes, input_dim)])

    def _residual(self, W, batch):
        labels = batch.targets.astype(np.int64)
        if labels.ndim != 1 or labels.min() < 0 or labels.max() >= W.shape[0]:
            raise InvalidArgumentError(f"labels must be integers in [0, {W.shape[0]})")
        logits = batch.inputs @ W.T
        probs, lse = _log_softmax_parts(logits)
        rows = np.arange(batch.size)
        value = float(np.mean(lse - logits[rows, labels]))
        probs[rows, labels] -= 1.0
        return probs, value

    def smoothness(self, batch):
        gram = batch.inputs.T @ batch.inputs / batch.size
        return 0.5 * float(np.linalg.eigvalsh(gram)[-1])


class MLPTask(TaskModel):
    """Two-layer tanh network with a frozen hidden bias and softmax output.

    Trainable: W1 (hidden x input) and W2 (classes x hidden). The bias is
    fixed at construction and never sketched.
    """

    variant = TaskVariant.MLP

    def __init__(self, input_dim: int, hidden_dim: int, num_classes: int, bias: Optional[np.ndarray] = None):
        super().__init__([(hidden_dim, input_dim), (num_classes, hidden_dim)])
        self.bias = np.zeros(hidden_dim) if bias is None else np.asarray(bias, dtype=np.float64)
        self.bias.setflags(write=False)

    def _forward(self, W, batch):
        labels = batch.targets.astype(np.int64)
        hidden = np.tanh(batch.inputs @ W[0].T + self.bias)
        logits = hidden @ W[1].T
        probs, lse = _log_softmax_parts(logits)
        rows = np.arange(batch.size)
        value = float(np.mean(lse - logits[rows, labels]))
        probs[rows, labels] -= 1.0
        out_error = probs / batch.size
        hidden_error = (out_error @ W[1]) * (1.0 - hidden**2)
        return hidden, out_error, hidden_error, value

    def loss(self, W, batch):
        self._validate(W, batch)
        return self._forward(W, batch)[3]

    def grad(self, W, batch):
        self._validate(W, batch)
        hidden, out_error, hidden_error, _ = self._forward(W, batch)
        return [hidden_error.T @ batch.inputs, out_error.T @ hidden]

    def grad_B(self, W, P, batch):
        self._validate(W, batch)
        p1, p2 = self.projections(P)
        hidden, out_error, hidden_error, _ = self._forward(W, batch)
        return [hidden_error.T @ (batch.inputs @ p1.T), out_error.T @ (hidden @ p2.T)]


def build_task(config: TaskConfig, seed: int = 0) -> TaskModel:
    """Instantiate the task model a config describes."""
    if config.variant == TaskVariant.QUADRATIC:
        return QuadraticTask(config.input_dim, config.output_dim)
    if config.variant == TaskVariant.LOGISTIC:
        return LogisticTask(config.input_dim, config.output_dim)
    bias = derive_rng(seed, "mlp-bias").standard_normal(config.hidden_dim) * 0.1
    return MLPTask(config.input_dim, config.hidden_dim, config.output_dim, bias=bias)


# ── Module-level oracles ───────────────────────────────────────────

def loss(model: TaskModel, W: Sequence[np.ndarray], batch: Batch) -> float:
    return model.loss(W, batch)


def grad(model: TaskModel, W: Sequence[np.ndarray], batch: Batch) -> WeightSet:
    return model.grad(W, batch)


def grad_B(
    model: TaskModel, W: Sequence[np.ndarray], P: Sequence[ProjectionMatrix | np.ndarray], batch: Batch
) -> WeightSet:
    return model.grad_B(W, P, batch)


def global_loss_and_grad(
    model: TaskModel, W: Sequence[np.ndarray], shards: Sequence[Dataset]
) -> tuple[float, WeightSet]:
    """F(W) = (1/N) Σ_n F_n(W) and its gradient, on full shards."""
    if not shards:
        raise InvalidArgumentError("at least one shard is required")
    total_loss = 0.0
    total_grad = [np.zeros(shape, dtype=W[0].dtype) for shape in model.layer_shapes]
    for shard in shards:
        batch = shard.as_batch()
        total_loss += model.loss(W, batch)
        for acc, g in zip(total_grad, model.grad(W, batch)):
            acc += g
    n = len(shards)
    return total_loss / n, [g / n for g in total_grad]


class NoiseHeterogeneityEstimate(NamedTuple):
    """Empirical σ̂² and ς̂² at a fixed W."""

    sigma_sq: float
    varsigma_sq: float
    per_shard_variance: tuple[float, ...]
    shard_sizes: tuple[int, ...]

    def minibatch_noise(self, batch_size: int, shard_index: int = 0) -> float:
        """Variance of a mini-batch gradient drawn without replacement from one shard."""
        n = self.shard_sizes[shard_index]
        b = min(batch_size, n)
        if n <= 1 or b >= n:
            return 0.0
        return self.per_shard_variance[shard_index] / b * (n - b) / (n - 1)


def estimate_noise_and_heterogeneity(
    model: TaskModel, W: Sequence[np.ndarray], shards: Sequence[Dataset]
) -> NoiseHeterogeneityEstimate:
    """Estimate the bounded-variance and bounded-heterogeneity constants at W.

    σ̂² is the largest per-example gradient variance over shards;
    ς̂² = (1/N) Σ_n ‖∇F_n‖² − ‖∇F‖².
    """
    if not shards:
        raise InvalidArgumentError("at least one shard is required")
    variances, sizes, grads = [], [], []
    for i, shard in enumerate(shards):
        if len(shard) == 0:
            raise InvalidArgumentError(f"shard {i} is empty")
        batch = shard.as_batch()
        variances.append(model.per_example_variance(W, batch))
        sizes.append(len(shard))
        grads.append(model.grad(W, batch))

    n = len(shards)
    mean_sq = sum(sum(float(np.sum(g**2)) for g in gs) for gs in grads) / n
    global_grad = [sum(gs[layer] for gs in grads) / n for layer in range(len(grads[0]))]
    varsigma_sq = max(0.0, mean_sq - sum(float(np.sum(g**2)) for g in global_grad))
    return NoiseHeterogeneityEstimate(
        sigma_sq=max(variances),
        varsigma_sq=varsigma_sq,
        per_shard_variance=tuple(variances),
        shard_sizes=tuple(sizes),
    )
