"""IID and per-class Dirichlet partitioning of a dataset across clients."""

import logging
from typing import Sequence

import numpy as np

from shared.errors import InvalidArgumentError, InvalidConfigurationError, PartitionFailureError
from shared.rng import derive_rng
from simulator.partitioner.models import HeterogeneityReport, Partition, PartitionMode, PartitionSpec
from simulator.tasks.models import Dataset

logger = logging.getLogger(__name__)


def _iid(n: int, num_clients: int, rng: np.random.Generator) -> list[np.ndarray]:
    return np.array_split(rng.permutation(n), num_clients)


def _dirichlet(labels: np.ndarray, num_classes: int, spec: PartitionSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Each class is split across clients by proportions drawn from Dir(α·1_N)."""
    parts: list[list[np.ndarray]] = [[] for _ in range(spec.num_clients)]
    for c in range(num_classes):
        idx_c = np.flatnonzero(labels == c)
        if idx_c.size == 0:
            continue
        idx_c = rng.permutation(idx_c)
        proportions = rng.dirichlet(np.full(spec.num_clients, spec.alpha))
        cuts = (np.cumsum(proportions) * idx_c.size).astype(np.int64)[:-1]
        for client, chunk in enumerate(np.split(idx_c, cuts)):
            parts[client].append(chunk)
    return [np.concatenate(p) if p else np.empty(0, dtype=np.int64) for p in parts]


def split(dataset: Dataset, spec: PartitionSpec) -> Partition:
    """Assign every example to exactly one of N non-empty shards."""
    n = len(dataset)
    if n < spec.num_clients:
        raise InvalidArgumentError(f"{n} examples cannot fill {spec.num_clients} non-empty shards")

    rng = derive_rng(spec.seed, "partition")
    if spec.mode == PartitionMode.IID:
        return Partition(spec=spec, indices=tuple(np.sort(p) for p in _iid(n, spec.num_clients, rng)))

    if not dataset.has_labels:
        raise InvalidConfigurationError("dirichlet partitioning needs class labels", field="partition.mode")
    num_classes = dataset.num_classes or int(dataset.labels.max()) + 1
    for attempt in range(1, spec.max_retries + 1):
        parts = _dirichlet(dataset.labels, num_classes, spec, rng)
        empty = sum(1 for p in parts if p.size == 0)
        if empty == 0:
            return Partition(spec=spec, indices=tuple(np.sort(p) for p in parts), attempts=attempt)
        logger.warning(f"⚠️ Dirichlet split attempt {attempt}/{spec.max_retries} left {empty} empty shard(s), resampling")
    raise PartitionFailureError(
        f"no split with all {spec.num_clients} shards non-empty after {spec.max_retries} attempts (alpha={spec.alpha})"
    )


def apply(dataset: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """split() followed by materializing the shards."""
    return split(dataset, spec).shards(dataset)


def heterogeneity_report(shards: Sequence[Dataset], num_classes: int | None = None) -> HeterogeneityReport:
    """Label histograms per shard and their TV distance from the pooled histogram."""
    if not shards:
        raise InvalidArgumentError("at least one shard is required")
    for i, shard in enumerate(shards):
        if not shard.has_labels:
            raise InvalidArgumentError(f"shard {i} has no class labels")
    if num_classes is None:
        num_classes = max(s.num_classes for s in shards)
    if num_classes < 1:
        num_classes = 1 + max((int(s.labels.max()) for s in shards if len(s) > 0), default=0)

    counts = np.stack([np.bincount(s.labels, minlength=num_classes)[:num_classes] for s in shards])
    pooled = counts.sum(axis=0)
    global_p = pooled / max(int(pooled.sum()), 1)
    tvs = []
    for row in counts:
        total = int(row.sum())
        p = row / total if total else np.zeros(num_classes)
        tvs.append(0.5 * float(np.abs(p - global_p).sum()))
    return HeterogeneityReport(
        num_classes=num_classes,
        histograms=counts.astype(int).tolist(),
        global_histogram=pooled.astype(int).tolist(),
        tv_distances=tvs,
        mean_tv=float(np.mean(tvs)),
    )
