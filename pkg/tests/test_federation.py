import numpy as np
import pytest

from conftest import small_config
from shared.errors import DivergedError, ProtocolError
from shared.rng import derive_rng
from simulator.federation import (
    ClientPool,
    GlobalAccumulatorSet,
    KSeedServer,
    Uplink,
    aggregate,
    build_experiment,
    reconstruct_global,
    run_fedfft,
    run_fedkrso,
    run_fedlora,
    run_method,
)
from simulator.local_trainer import LocalAccumulatorSet
from simulator.local_trainer.trainer import shadow_sgd_path
from simulator.sketch import gen_projection, make_seed_pool
from simulator.tasks import BatchSampler

SHAPES = ((3, 2),)


def _accs(client_id, blocks, round=0, K=3):
    return LocalAccumulatorSet(
        client_id=client_id,
        round=round,
        K=K,
        block_shapes=SHAPES,
        blocks={k: (np.full(SHAPES[0], float(v)),) for k, v in blocks.items()},
    )


# ── Aggregation ────────────────────────────────────────────────────

def test_aggregate_averages_over_all_clients():
    result = aggregate([_accs(0, {0: 1.0}), _accs(1, {0: 2.0, 2: 2.0})], 3, num_clients=2)
    np.testing.assert_allclose(result.blocks[0][0], 1.5)
    np.testing.assert_allclose(result.blocks[1][0], 0.0)
    np.testing.assert_allclose(result.blocks[2][0], 1.0)
    assert result.round == 0 and result.K == 3


def test_aggregate_matches_brute_force_mean_with_untouched_seeds():
    rng = np.random.default_rng(8)
    touched = {0: (0, 2), 1: (1,), 2: (0, 1, 2)}
    reports, dense = [], np.zeros((3, 3) + SHAPES[0])
    for cid, seeds in touched.items():
        blocks = {k: (rng.standard_normal(SHAPES[0]),) for k in seeds}
        for k, (b,) in blocks.items():
            dense[cid, k] = b
        reports.append(LocalAccumulatorSet(client_id=cid, round=0, K=3, block_shapes=SHAPES, blocks=blocks))
    result = aggregate(reports, 3, num_clients=3)
    for k in range(3):
        np.testing.assert_allclose(result.blocks[k][0], dense[:, k].mean(axis=0), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize(
    "reports,kwargs",
    [
        ([], {}),
        ([_accs(0, {0: 1}), _accs(0, {1: 1})], {}),
        ([_accs(0, {0: 1})], {"num_clients": 2}),
        ([_accs(0, {0: 1}), _accs(1, {0: 1}, round=1)], {}),
        ([_accs(0, {0: 1}, K=4)], {}),
    ],
    ids=["empty", "duplicate", "missing", "round", "K"],
)
def test_aggregate_rejects_inconsistent_reports(reports, kwargs):
    with pytest.raises(ProtocolError):
        aggregate(reports, 3, **kwargs)


# ── Reconstruction ─────────────────────────────────────────────────

def test_reconstruct_adds_each_block_times_its_projection():
    pool = make_seed_pool(4, 0, 3)
    W_prev = [np.ones((3, 5))]
    B = aggregate([_accs(0, {1: 0.5})], 3)
    W = reconstruct_global(W_prev, B, pool, rank=2)
    P = gen_projection(pool.seeds[1], 2, 5).entries
    np.testing.assert_allclose(W[0], 1.0 + np.full((3, 2), 0.5) @ P, rtol=1e-12)
    np.testing.assert_array_equal(W_prev[0], 1.0)


def test_reconstruct_initial_round_is_identity():
    W = reconstruct_global([np.ones((3, 5))], GlobalAccumulatorSet.zeros(3, SHAPES), None)
    np.testing.assert_array_equal(W[0], 1.0)


def test_reconstruct_rejects_protocol_violations():
    B = aggregate([_accs(0, {1: 0.5})], 3)
    W = [np.ones((3, 5))]
    with pytest.raises(ProtocolError):
        reconstruct_global(W, B, None)
    with pytest.raises(ProtocolError):
        reconstruct_global(W, B, make_seed_pool(4, 1, 3))
    with pytest.raises(ProtocolError):
        reconstruct_global(W, B, make_seed_pool(4, 0, 4))
    nonzero_initial = GlobalAccumulatorSet(round=-1, K=1, block_shapes=SHAPES, blocks=((np.ones((3, 2)),),))
    with pytest.raises(ProtocolError):
        reconstruct_global(W, nonzero_initial, None)


def test_server_rejects_stale_uploads():
    server = KSeedServer(0, 3, SHAPES, num_clients=1)
    with pytest.raises(ProtocolError):
        server.receive([Uplink(_accs(0, {0: 1}))])
    downlink = server.begin_round(1)
    assert downlink.params == 3 * 6 + 3
    with pytest.raises(ProtocolError):
        server.receive([Uplink(_accs(0, {0: 1}, round=0))])


def test_client_pool_preserves_order():
    assert ClientPool(4).map(lambda c: c * c, list(range(10))) == [c * c for c in range(10)]
    with pytest.raises(ValueError, match="boom"):
        ClientPool(2).map(_fail_on_one, [0, 1, 2])


def _fail_on_one(c):
    if c == 1:
        raise ValueError("boom")
    return c


# ── Round loops ────────────────────────────────────────────────────

def test_fedkrso_trace_costs_and_progress():
    config = small_config()
    trace = run_fedkrso(config)
    assert len(trace) == 3
    Q = 4 * 2
    for record in trace.records:
        assert record.downlink_params == 4 * Q + 4
        assert all(0 < u <= 2 * Q for u in record.client_uplinks)
        assert record.uplink_params == sum(record.client_uplinks)
        assert sum(record.seed_usage.values()) == 3 * 2
        assert record.seconds == 0.0
    assert trace.final_loss < trace.initial_loss


def test_fedkrso_is_deterministic_and_thread_independent():
    a = run_fedkrso(small_config())
    b = run_fedkrso(small_config())
    c = run_fedkrso(small_config(**{"federation.workers": 3}))
    assert a.to_csv() == b.to_csv() == c.to_csv()
    assert a.final_weights[0].tobytes() == c.final_weights[0].tobytes()


def test_fedkrso_consistency_checks():
    trace = run_fedkrso(small_config(**{"run.checks": True}))
    for record in trace.records:
        assert record.reconstruction_error < 1e-10
        assert record.aggregation_error < 1e-10
        assert record.reset_error < 1e-10
        assert record.completeness_error < 1e-10


def test_zero_learning_rate_single_round_keeps_initial_model():
    config = small_config(**{"optimizer.learning_rate": 0.0, "federation.rounds": 1})
    trace = run_fedkrso(config)
    assert trace.records[0].global_loss == trace.initial_loss
    np.testing.assert_array_equal(trace.final_weights[0], build_experiment(config).W0[0])


def test_full_rank_orthonormal_sketch_reduces_to_fedfft():
    updates = {
        "sketch.rank": 8,
        "sketch.kind": "row_orthonormal_scaled",
        "optimizer.momentum_enabled": False,
    }
    sketched = run_fedkrso(small_config(**updates))
    full = run_fedfft(small_config(**updates, **{"federation.method": "fedfft"}))
    np.testing.assert_allclose(sketched.losses, full.losses, rtol=1e-9)
    np.testing.assert_allclose(sketched.final_weights[0], full.final_weights[0], rtol=1e-9, atol=1e-12)


def test_fedfft_communicates_full_weights():
    trace = run_fedfft(small_config(**{"federation.method": "fedfft"}))
    assert [r.downlink_params for r in trace.records] == [32] * 3
    assert [r.uplink_params for r in trace.records] == [96] * 3
    assert trace.final_loss < trace.initial_loss


def test_fedfft_converges_to_least_squares_minimizer():
    config = small_config(**{
        "federation.method": "fedfft", "federation.num_clients": 2, "federation.rounds": 300,
        "federation.intervals": 1, "federation.interval_length": 1, "federation.local_iterations": 1,
        "optimizer.momentum_enabled": False, "optimizer.batch_size": 100, "task.label_noise": 0.1,
    })
    exp = build_experiment(config)
    assert [len(s) for s in exp.shards] == [100, 100]
    pooled = exp.dataset.as_batch()
    config = config.with_updates({"optimizer.learning_rate": 1.0 / exp.model.smoothness(pooled)})
    trace = run_fedfft(config, exp)
    (W_star,) = exp.model.minimizer(pooled)
    assert np.linalg.norm(trace.final_weights[0] - W_star) < 1e-4


def test_single_client_fedfft_is_centralized_sgd():
    config = small_config(**{"federation.method": "fedfft", "federation.num_clients": 1, "optimizer.momentum_enabled": False})
    exp = build_experiment(config)
    trace = run_fedfft(config, exp)
    W = exp.W0
    for t in range(config.federation.rounds):
        sampler = BatchSampler(exp.shards[0], 8, derive_rng(11, "batches", 0, t))
        W = shadow_sgd_path(exp.model, W, sampler, 10, 0.02)[-1]
    np.testing.assert_allclose(trace.final_weights[0], W[0], rtol=1e-12, atol=1e-15)


@pytest.mark.slow
def test_fedkrso_quadratic_with_descent_step_size():
    r, d_n, J = 4, 8, 5
    config = small_config(**{
        "federation.num_clients": 4, "federation.rounds": 50,
        "federation.intervals": 10, "federation.interval_length": J, "federation.local_iterations": 10 * J,
        "sketch.rank": r, "optimizer.momentum_enabled": False, "optimizer.batch_size": 50,
    })
    exp = build_experiment(config)
    L = max(exp.model.smoothness(shard.as_batch()) for shard in exp.shards)
    trace = run_fedkrso(config.with_updates({"optimizer.learning_rate": r / (16 * L * d_n * J)}), exp)
    assert trace.final_loss < 0.1 * trace.initial_loss


def test_full_rank_ffa_lora_with_orthonormal_factor_tracks_fedfft():
    updates = {
        "task.input_dim": 4, "task.output_dim": 8, "lora.rank": 4,
        "lora.init_kind": "row_orthonormal_scaled", "optimizer.momentum_enabled": False,
    }
    ffa = run_fedlora(small_config(**updates, **{"federation.method": "ffa_lora"}))
    full = run_fedfft(small_config(**updates, **{"federation.method": "fedfft"}))
    np.testing.assert_allclose(ffa.losses, full.losses, rtol=1e-9)
    np.testing.assert_allclose(ffa.final_weights[0], full.final_weights[0], rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("method", ["fedkrso", "fedfft", "fedit", "ffa_lora"])
def test_every_runner_takes_config_and_experiment(method):
    config = small_config(**{"federation.method": method, "federation.rounds": 1, "lora.rank": 2, "run.checks": True})
    trace = run_method(config, build_experiment(config))
    assert trace.method == method and len(trace) == 1
    checked = trace.records[0].reconstruction_error is not None
    assert checked == (method == "fedkrso")


def test_ffa_lora_only_moves_within_row_space_of_a():
    config = small_config(**{"federation.method": "ffa_lora", "lora.rank": 2})
    trace = run_method(config)
    W0 = build_experiment(config).W0[0]
    from simulator.federation.runners import lora_factors

    _, (A,) = lora_factors(config, [(4, 8)])
    complement = np.eye(8) - A.T @ np.linalg.solve(A @ A.T, A)
    np.testing.assert_allclose((trace.final_weights[0] - W0) @ complement, 0.0, atol=1e-10)
    assert trace.records[0].downlink_params == 4 * 2


def test_fedit_trains_both_factors():
    trace = run_fedlora(small_config(**{"federation.method": "fedit", "lora.rank": 2}))
    assert trace.method == "fedit"
    assert trace.records[0].uplink_params == 3 * (4 + 8) * 2
    assert trace.final_loss < trace.initial_loss


def test_divergence_is_reported_with_round():
    config = small_config(**{"optimizer.learning_rate": 1e8, "optimizer.momentum_enabled": False})
    with np.errstate(all="ignore"), pytest.raises(DivergedError) as err:
        run_fedkrso(config)
    assert err.value.round is not None


def test_running_gradient_average_includes_initial_model():
    trace = run_fedkrso(small_config())
    assert trace.running_grad_norm_avg(1) == trace.initial_grad_norm_sq
    expected = np.mean([trace.initial_grad_norm_sq] + trace.grad_norms_sq[:2])
    assert trace.running_grad_norm_avg(3) == pytest.approx(expected)
    with pytest.raises(ValueError):
        trace.running_grad_norm_avg(5)
