from simulator.tasks.models import Batch, Dataset, TaskConfig, TaskVariant, WeightSet
from simulator.tasks.objectives import (
    LogisticTask,
    MLPTask,
    NoiseHeterogeneityEstimate,
    QuadraticTask,
    TaskModel,
    build_task,
    estimate_noise_and_heterogeneity,
    global_loss_and_grad,
    grad,
    grad_B,
    loss,
)
from simulator.tasks.data import (
    BatchSampler,
    generate_client_datasets,
    generate_dataset,
    load_dataset,
    save_dataset,
)

__all__ = [
    "Batch",
    "BatchSampler",
    "Dataset",
    "LogisticTask",
    "MLPTask",
    "NoiseHeterogeneityEstimate",
    "QuadraticTask",
    "TaskConfig",
    "TaskModel",
    "TaskVariant",
    "WeightSet",
    "build_task",
    "estimate_noise_and_heterogeneity",
    "generate_client_datasets",
    "generate_dataset",
    "global_loss_and_grad",
    "grad",
    "grad_B",
    "load_dataset",
    "loss",
    "save_dataset",
]
