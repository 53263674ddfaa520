"""Experiment-scale checks of the simulator's headline properties."""

import numpy as np
import pytest

from config.run_config import GridSpec, RunConfig
from orchestrator.orchestrator import Orchestrator, capacity_closure
from orchestrator.sweep import run_sweep
from simulator.accounting import Method
from simulator.federation import build_experiment, run_fedfft, run_fedkrso, run_fedlora
from simulator.partitioner import PartitionMode, PartitionSpec, apply, heterogeneity_report
from simulator.tasks import TaskConfig, TaskVariant, generate_dataset


def _config(**updates) -> RunConfig:
    return RunConfig().with_updates(updates)


RANK8_TASK = {
    "task.variant": "logistic",
    "task.input_dim": 16,
    "task.output_dim": 10,
    "task.planted_rank": 8,
    "task.signal_strength": 3.0,
    "task.num_examples": 3000,
    "federation.num_clients": 10,
    "federation.intervals": 5,
    "federation.interval_length": 10,
    "federation.local_iterations": 50,
    "optimizer.learning_rate": 0.05,
    "optimizer.batch_size": 16,
    "sketch.rank": 4,
}


def test_identity_sketch_matches_fedavg_sgd():
    updates = {
        "task.input_dim": 16, "task.output_dim": 16, "task.num_examples": 800,
        "federation.num_clients": 4, "federation.rounds": 20, "federation.K": 1,
        "federation.intervals": 1, "federation.interval_length": 10, "federation.local_iterations": 10,
        "sketch.kind": "row_orthonormal_scaled", "sketch.rank": 16,
        "optimizer.momentum_enabled": False, "optimizer.learning_rate": 0.01,
    }
    sketched = run_fedkrso(_config(**updates))
    sgd = run_fedfft(_config(**updates, **{"federation.method": "fedfft"}))
    np.testing.assert_allclose(sketched.losses, sgd.losses, rtol=1e-9)


@pytest.mark.slow
def test_reconstruction_reset_and_costs_on_mlp():
    config = _config(**{
        "task.variant": "mlp", "task.input_dim": 16, "task.hidden_dim": 16, "task.output_dim": 4,
        "task.num_examples": 2000, "federation.num_clients": 10, "federation.rounds": 30, "federation.K": 10,
        "federation.intervals": 5, "federation.interval_length": 20, "federation.local_iterations": 100,
        "run.checks": True,
    })
    trace = run_fedkrso(config)
    Q = 16 * 4 + 4 * 4
    assert len(trace) == 30
    for record in trace.records:
        assert record.reconstruction_error <= 1e-8
        assert record.aggregation_error <= 1e-10
        assert record.reset_error <= 1e-8
        assert record.downlink_params == 10 * Q + 10
        assert max(record.client_uplinks) <= 5 * Q


def test_cost_table_for_square_layer():
    config = _config(**{"task.input_dim": 768, "task.output_dim": 768, "sketch.rank": 4})
    table = Orchestrator().cost_table(config)
    assert "P = 589824, L = 6144, Q = 3072" in table
    for method in Method:
        assert f"| {method.value} |" in table


@pytest.mark.slow
def test_running_gradient_average_keeps_falling():
    r, d_n, J = 2, 4, 5
    base = _config(**{
        "task.input_dim": d_n, "task.output_dim": 2, "task.planted_rank": 2, "task.num_examples": 2000,
        "federation.num_clients": 4, "federation.rounds": 400, "federation.K": 4,
        "federation.intervals": 1, "federation.interval_length": J, "federation.local_iterations": J,
        "sketch.kind": "row_orthonormal_scaled", "sketch.rank": r,
        "optimizer.momentum_enabled": False, "optimizer.batch_size": 1000,
    })
    early, late = [], []
    for seed in range(10):
        config = base.with_updates({"run.master_seed": seed})
        exp = build_experiment(config)
        L = max(exp.model.smoothness(shard.as_batch()) for shard in exp.shards)
        config = config.with_updates({"optimizer.learning_rate": r / (16 * L * d_n * J)})
        trace = run_fedkrso(config, exp)
        early.append(trace.running_grad_norm_avg(100))
        late.append(trace.running_grad_norm_avg(400))
    assert np.mean(late) <= 0.5 * np.mean(early)


@pytest.mark.slow
def test_capacity_ordering_against_full_and_rank_one_tuning():
    base = _config(**RANK8_TASK, **{
        "federation.rounds": 60, "federation.K": 10, "partition.mode": "dirichlet", "partition.alpha": 0.25,
    })
    initial, finals = [], {"fedfft": [], "fedkrso": [], "fedit": []}
    for seed in range(5):
        config = base.with_updates({"run.master_seed": seed})
        exp = build_experiment(config)
        fft = run_fedfft(config.with_updates({"federation.method": "fedfft"}), exp)
        krso = run_fedkrso(config, exp)
        lora = run_fedlora(config.with_updates({"federation.method": "fedit", "lora.rank": 1}), exp)
        initial.append(fft.initial_loss)
        for name, trace in (("fedfft", fft), ("fedkrso", krso), ("fedit", lora)):
            finals[name].append(trace.final_loss)

    L0 = np.mean(initial)
    fft, krso, lora = (np.mean(finals[m]) for m in ("fedfft", "fedkrso", "fedit"))
    assert fft <= krso <= lora
    assert capacity_closure(L0, krso, fft) >= 0.8
    assert capacity_closure(L0, lora, fft) < 0.8


def test_label_skew_ordering():
    data = generate_dataset(
        TaskConfig(variant=TaskVariant.LOGISTIC, input_dim=8, output_dim=10, num_examples=3000),
        np.random.default_rng(0),
    )

    def mean_tv(mode, alpha=None):
        values = []
        for seed in range(20):
            spec = PartitionSpec(mode=mode, alpha=alpha, num_clients=10, seed=seed)
            values.append(heterogeneity_report(apply(data, spec), num_classes=10).mean_tv)
        return np.mean(values)

    assert mean_tv(PartitionMode.IID) < mean_tv(PartitionMode.DIRICHLET, 0.5) < mean_tv(PartitionMode.DIRICHLET, 0.25)


@pytest.mark.slow
def test_more_seeds_per_round_do_not_hurt(tmp_path):
    base = _config(**RANK8_TASK, **{"federation.rounds": 20, "run.name": "k-sweep"})
    result = run_sweep(base, GridSpec(K=[1, 2, 4, 8, 16], repeats=5), Orchestrator(tmp_path), output_dir=tmp_path / "k")
    assert result.exit_code == 0
    means = {g["K"]: g["mean_final_loss"] for g in result.group_means()}
    ks = sorted(means)
    for smaller, larger in zip(ks, ks[1:]):
        assert means[larger] <= means[smaller] * 1.02
    assert means[16] < means[1]


@pytest.mark.slow
def test_interval_length_sweep_reports_every_point(tmp_path):
    base = _config(**RANK8_TASK, **{
        "federation.rounds": 3, "federation.intervals": 1, "federation.interval_length": 100,
        "federation.local_iterations": 100,
    })
    result = run_sweep(base, GridSpec(J=[10, 20, 50, 100], repeats=2), Orchestrator(tmp_path), output_dir=tmp_path / "j")
    assert result.exit_code == 0
    groups = {g["J"]: g for g in result.group_means()}
    assert sorted(groups) == [10, 20, 50, 100]
    assert [groups[J]["I"] for J in (10, 20, 50, 100)] == [10, 5, 2, 1]
    assert all(g["runs"] == 2 and g["mean_final_loss"] is not None for g in groups.values())
