"""Materialize the data, shards and initial weights a RunConfig describes."""

import logging
from dataclasses import dataclass
from typing import Optional

from config.run_config import RunConfig
from shared.rng import derive_rng
from simulator.partitioner.models import Partition
from simulator.partitioner.partition import split
from simulator.tasks.data import generate_client_datasets, generate_dataset
from simulator.tasks.models import Dataset, WeightSet
from simulator.tasks.objectives import TaskModel, build_task

logger = logging.getLogger(__name__)


@dataclass
class Experiment:
    config: RunConfig
    model: TaskModel
    shards: list[Dataset]
    W0: WeightSet
    dataset: Optional[Dataset] = None
    partition: Optional[Partition] = None


def build_experiment(config: RunConfig) -> Experiment:
    """Task model, client shards and W^0, all derived from the master seed."""
    master = config.run.master_seed
    task = config.task
    model = build_task(task, seed=master)

    dataset, partition = None, None
    if task.heterogeneity > 0:
        shards = generate_client_datasets(task, config.federation.num_clients, derive_rng(master, "data"))
    else:
        dataset = generate_dataset(task, derive_rng(master, "data"))
        partition = split(dataset, config.partition_spec())
        shards = partition.shards(dataset)

    dtype = config.dtype
    if dtype != shards[0].inputs.dtype:
        shards = [s.astype(dtype) for s in shards]
    W0 = model.init_weights(derive_rng(master, "init"), task.init_scale, dtype=dtype)
    logger.info(
        f"📦 Built {task.variant.value} experiment: {len(shards)} shards "
        f"(sizes {min(len(s) for s in shards)}..{max(len(s) for s in shards)}), layers {model.layer_shapes}"
    )
    return Experiment(config=config, model=model, shards=shards, W0=W0, dataset=dataset, partition=partition)
