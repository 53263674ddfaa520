import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from config.run_config import RunConfig
from simulator.tasks.models import Batch


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def quad_batch(rng):
    inputs = rng.standard_normal((40, 6))
    targets = rng.standard_normal((40, 3))
    return Batch(inputs, targets)


def small_config(**updates) -> RunConfig:
    """A fast quadratic FedKRSO config with dotted-key overrides."""
    base = {
        "task.variant": "quadratic",
        "task.input_dim": 8,
        "task.output_dim": 4,
        "task.planted_rank": 2,
        "task.num_examples": 200,
        "federation.num_clients": 3,
        "federation.rounds": 3,
        "federation.K": 4,
        "federation.intervals": 2,
        "federation.interval_length": 5,
        "federation.local_iterations": 10,
        "sketch.rank": 2,
        "optimizer.learning_rate": 0.02,
        "optimizer.batch_size": 8,
        "run.master_seed": 11,
    }
    base.update(updates)
    return RunConfig().with_updates(base)


@pytest.fixture
def make_config():
    return small_config
