"""Synthetic data generation, mini-batch sampling and dataset files."""

import logging
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from shared.errors import InvalidArgumentError
from simulator.tasks.models import Batch, Dataset, TaskConfig, TaskVariant

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────

DATASET_MAGIC = b"FKRSODS\x00"
DATASET_VERSION = 1
_HEADER = struct.Struct("<6Q")


# ── Generation ─────────────────────────────────────────────────────

def planted_low_rank(rng: np.random.Generator, rows: int, cols: int, rank: int, strength: float) -> np.ndarray:
    """strength · U Vᵀ with orthonormal U (rows x k), V (cols x k), k = min(rank, rows, cols)."""
    k = min(rank, rows, cols)
    u, _ = np.linalg.qr(rng.standard_normal((rows, k)))
    v, _ = np.linalg.qr(rng.standard_normal((cols, k)))
    return strength * (u @ v.T)


def _sample_labels(rng: np.random.Generator, logits: np.ndarray) -> np.ndarray:
    # Gumbel-max draws from softmax(logits)
    gumbel = -np.log(-np.log(rng.uniform(size=logits.shape)))
    return np.argmax(logits + gumbel, axis=1).astype(np.int64)


def generate_dataset(config: TaskConfig, rng: np.random.Generator, num_examples: Optional[int] = None) -> Dataset:
    """Draw Gaussian features and targets from a planted model."""
    n = num_examples or config.num_examples
    d_in = config.input_dim
    inputs = rng.standard_normal((n, d_in))

    if config.variant == TaskVariant.QUADRATIC:
        planted = planted_low_rank(rng, config.output_dim, d_in, config.planted_rank, config.signal_strength)
        targets = inputs @ planted.T
        if config.label_noise > 0:
            targets = targets + config.label_noise * rng.standard_normal(targets.shape)
        return Dataset(inputs=inputs, targets=targets)

    if config.variant == TaskVariant.LOGISTIC:
        planted = planted_low_rank(rng, config.output_dim, d_in, config.planted_rank, config.signal_strength)
        logits = inputs @ planted.T
    else:
        first = rng.standard_normal((config.hidden_dim, d_in)) / np.sqrt(d_in)
        second = planted_low_rank(rng, config.output_dim, config.hidden_dim, config.planted_rank, config.signal_strength)
        logits = np.tanh(inputs @ first.T) @ second.T

    labels = _sample_labels(rng, logits)
    return Dataset(inputs=inputs, targets=labels, labels=labels, num_classes=config.output_dim)


def generate_client_datasets(config: TaskConfig, num_clients: int, rng: np.random.Generator) -> list[Dataset]:
    """Quadratic shards whose optima differ by planted perturbations.

    Client n fits W* + Δ_n with ‖Δ_n‖_F = heterogeneity and Σ_n Δ_n = 0.
    """
    if config.variant != TaskVariant.QUADRATIC:
        raise InvalidArgumentError("planted heterogeneity is only defined for the quadratic task")
    d_m, d_in = config.output_dim, config.input_dim
    planted = planted_low_rank(rng, d_m, d_in, config.planted_rank, config.signal_strength)
    offsets = rng.standard_normal((num_clients, d_m, d_in))
    if num_clients > 1:
        offsets -= offsets.mean(axis=0, keepdims=True)
    norms = np.linalg.norm(offsets.reshape(num_clients, -1), axis=1)
    norms[norms == 0] = 1.0
    offsets *= (config.heterogeneity / norms)[:, None, None]

    per_client = max(1, config.num_examples // num_clients)
    shards = []
    for offset in offsets:
        inputs = rng.standard_normal((per_client, d_in))
        targets = inputs @ (planted + offset).T
        if config.label_noise > 0:
            targets = targets + config.label_noise * rng.standard_normal(targets.shape)
        shards.append(Dataset(inputs=inputs, targets=targets))
    return shards


# ── Mini-batch sampling ────────────────────────────────────────────

class BatchSampler:
    """Mini-batches without replacement within an epoch, reshuffled every epoch.

    A batch size at or above the shard size yields the full shard, in its
    natural order, at every call.
    """

    def __init__(self, shard: Dataset, batch_size: int, rng: np.random.Generator):
        if len(shard) == 0:
            raise InvalidArgumentError("cannot sample from an empty shard")
        if batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {batch_size}")
        self._shard = shard
        self._rng = rng
        self._batch_size = min(batch_size, len(shard))
        self._full = shard.as_batch() if self._batch_size == len(shard) else None
        self._order = np.empty(0, dtype=np.int64)
        self._cursor = 0
        self.epoch = 0

    @property
    def batch_size(self) -> int:
        return self._batch_size

    def next_batch(self) -> Batch:
        if self._full is not None:
            return self._full
        if self._cursor + self._batch_size > self._order.size:
            self._order = self._rng.permutation(len(self._shard))
            self._cursor = 0
            self.epoch += 1
        idx = self._order[self._cursor : self._cursor + self._batch_size]
        self._cursor += self._batch_size
        return Batch(inputs=self._shard.inputs[idx], targets=self._shard.targets[idx])


# ── Dataset files ──────────────────────────────────────────────────

def save_dataset(path: str | Path, dataset: Dataset) -> Path:
    """Write a dataset as magic + header + row-major float64 column blocks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    targets = dataset.targets.reshape(len(dataset), -1).astype("<f8")
    target_width = 0 if dataset.targets.ndim == 1 else targets.shape[1]
    header = _HEADER.pack(
        DATASET_VERSION,
        len(dataset),
        dataset.inputs.shape[1],
        target_width,
        int(dataset.has_labels),
        dataset.num_classes,
    )
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(header)
        f.write(np.ascontiguousarray(dataset.inputs, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(targets).tobytes())
        if dataset.has_labels:
            f.write(np.ascontiguousarray(dataset.labels, dtype="<f8").tobytes())
    return path


def load_dataset(path: str | Path) -> Dataset:
    """Read a dataset written by `save_dataset`."""
    raw = Path(path).read_bytes()
    if raw[: len(DATASET_MAGIC)] != DATASET_MAGIC:
        raise InvalidArgumentError(f"{path}: not a dataset file (bad magic bytes)")
    offset = len(DATASET_MAGIC)
    version, rows, width, target_width, has_labels, num_classes = _HEADER.unpack_from(raw, offset)
    if version != DATASET_VERSION:
        raise InvalidArgumentError(f"{path}: unsupported dataset version {version}")
    offset += _HEADER.size

    def _take(count: int) -> np.ndarray:
        nonlocal offset
        block = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        return block.astype(np.float64)

    inputs = _take(rows * width).reshape(rows, width)
    if target_width == 0:
        targets = _take(rows)
    else:
        targets = _take(rows * target_width).reshape(rows, target_width)
    labels = _take(rows).astype(np.int64) if has_labels else None
    if labels is not None:
        targets = targets.astype(np.int64)
    return Dataset(inputs=inputs, targets=targets, labels=labels, num_classes=int(num_classes))
