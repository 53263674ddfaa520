"""Round loops for FedKRSO and the FedFFT / FedLoRA baselines.

All three share batch streams (one sampler per client and round), the
learning-rate schedule and the evaluation path, so their traces are
directly comparable.
"""

import logging
import time
from typing import Callable, Optional, Sequence

import numpy as np

from config.run_config import RunConfig
from shared.errors import DivergedError, ProtocolError
from shared.linalg import apply_low_rank_update_, copy_weights, relative_error
from shared.rng import derive_rng, derive_seed
from simulator.accounting.costs import check_measured_costs, round_costs
from simulator.accounting.models import Method
from simulator.federation.evaluator import ShadowEvaluator
from simulator.federation.experiment import Experiment, build_experiment
from simulator.federation.models import RoundRecord, TrainingTrace
from simulator.federation.pool import ClientPool
from simulator.federation.protocol import FedKRSOClient, KSeedServer
from simulator.local_trainer.models import MomentState
from simulator.local_trainer.trainer import moment_step
from simulator.sketch.generator import gen_projection
from simulator.tasks.data import BatchSampler
from simulator.tasks.models import WeightSet

logger = logging.getLogger(__name__)


# ── Helpers ────────────────────────────────────────────────────────

def _ensure_finite(mats: Sequence[np.ndarray], what: str, round: int, client_id: int, iteration: int) -> None:
    if not all(np.all(np.isfinite(m)) for m in mats):
        raise DivergedError(f"non-finite {what}", iteration=iteration, round=round, client_id=client_id)


def _mean(per_client: Sequence[WeightSet]) -> WeightSet:
    n = len(per_client)
    out = [np.array(w, copy=True) for w in per_client[0]]
    for weights in per_client[1:]:
        for acc, w in zip(out, weights):
            acc += w
    for acc in out:
        acc /= n
    return out


def _sampler(exp: Experiment, client_id: int, round: int) -> BatchSampler:
    cfg = exp.config
    rng = derive_rng(cfg.run.master_seed, "batches", client_id, round)
    return BatchSampler(exp.shards[client_id], cfg.optimizer.batch_size, rng)


def _elapsed(config: RunConfig, started: float) -> float:
    return time.perf_counter() - started if config.run.record_wall_clock else 0.0


def _log_round(method: str, record: RoundRecord, rounds: int) -> None:
    logger.info(
        f"🔄 [{method}] round {record.round + 1}/{rounds}: loss={record.global_loss:.6g} "
        f"|∇F|²={record.grad_norm_sq:.4g} up={record.uplink_params} down={record.downlink_params}"
    )


# ── FedKRSO ────────────────────────────────────────────────────────

def run_fedkrso(config: RunConfig, experiment: Optional[Experiment] = None) -> TrainingTrace:
    """T rounds of seed broadcast, reconstruction, local training, upload and aggregation."""
    exp = experiment or build_experiment(config)
    checks = config.run.checks
    fed = config.federation
    cfg = config.local_config()
    schedule = config.schedule()
    master = config.run.master_seed
    model = exp.model
    block_shapes = [(d_m, cfg.rank) for d_m, _ in model.layer_shapes]

    server = KSeedServer(master, fed.K, block_shapes, fed.num_clients, dtype=config.dtype)
    clients = [FedKRSOClient(n, model, shard, exp.W0, cfg, master) for n, shard in enumerate(exp.shards)]
    evaluator = ShadowEvaluator(model, exp.shards, exp.W0, rank=cfg.rank, kind=cfg.sketch_kind)
    cost_model = round_costs(Method.FEDKRSO, model.layer_shapes, cfg.rank, K=fed.K, I=cfg.intervals)
    pool = ClientPool(fed.workers)

    loss0, grad0 = evaluator.evaluate(round=0)
    trace = TrainingTrace(method=Method.FEDKRSO.value, initial_loss=loss0, initial_grad_norm_sq=grad0)
    logger.info(f"🚀 fedkrso: N={fed.num_clients} T={fed.rounds} K={fed.K} I={cfg.intervals} J={cfg.interval_length} r={cfg.rank}")

    for t in range(fed.rounds):
        started = time.perf_counter()
        downlink = server.begin_round(t)

        def client_round(client: FedKRSOClient):
            client.reconstruct(downlink)
            error = evaluator.reconstruction_error(client.W) if checks else None
            uplink = client.train(downlink, schedule=schedule, step_offset=t * cfg.local_iterations, debug=checks)
            return uplink, error

        try:
            outcomes = pool.map(client_round, clients)
        except DivergedError as e:
            logger.error(f"❌ Round {t} diverged: {e}")
            raise e.at(round=t)
        uplinks = [u for u, _ in outcomes]

        accumulators = server.receive(uplinks)
        evaluator.advance(accumulators, downlink.pool)
        loss_value, grad_sq = evaluator.evaluate(round=t)

        client_uplinks = [u.params for u in uplinks]
        violations = check_measured_costs(cost_model, client_uplinks, downlink.params)
        if violations:
            logger.error(f"❌ Round {t} cost check failed: {violations}")
            raise ProtocolError("; ".join(violations))

        usage: dict[int, int] = {}
        for client in clients:
            for k, count in client.last_result.seed_usage.items():
                usage[k] = usage.get(k, 0) + count

        record = RoundRecord(
            round=t,
            global_loss=loss_value,
            grad_norm_sq=grad_sq,
            uplink_params=sum(client_uplinks),
            downlink_params=downlink.params,
            client_uplinks=client_uplinks,
            seed_usage=dict(sorted(usage.items())),
        )
        if checks:
            results = [c.last_result for c in clients]
            record.reconstruction_error = max(e for _, e in outcomes)
            record.aggregation_error = relative_error(evaluator.W, _mean([r.pre_reset_weights for r in results]))
            record.reset_error = max(r.reset_error for r in results)
            record.completeness_error = max(r.completeness_error for r in results)
            logger.debug(
                f"round {t} checks: reconstruction={record.reconstruction_error:.3g} "
                f"aggregation={record.aggregation_error:.3g} reset={record.reset_error:.3g}"
            )
        record.seconds = _elapsed(config, started)
        trace.records.append(record)
        _log_round("fedkrso", record, fed.rounds)

    trace.final_weights = copy_weights(evaluator.W)
    return trace


# ── FedFFT ─────────────────────────────────────────────────────────

def run_fedfft(config: RunConfig, experiment: Optional[Experiment] = None) -> TrainingTrace:
    """FedAvg over full weights with I·J local steps of the same moment scheme."""
    exp = experiment or build_experiment(config)
    fed = config.federation
    cfg = config.local_config()
    schedule = config.schedule()
    model = exp.model
    steps = cfg.local_iterations
    P = sum(d_m * d_n for d_m, d_n in model.layer_shapes)

    W = copy_weights(exp.W0)
    evaluator = ShadowEvaluator(model, exp.shards, W)
    pool = ClientPool(fed.workers)
    loss0, grad0 = evaluator.evaluate(round=0)
    trace = TrainingTrace(method=Method.FEDFFT.value, initial_loss=loss0, initial_grad_norm_sq=grad0)
    logger.info(f"🚀 fedfft: N={fed.num_clients} T={fed.rounds} local steps={steps}")

    for t in range(fed.rounds):
        started = time.perf_counter()

        def client_round(client_id: int) -> WeightSet:
            W_local = copy_weights(W)
            sampler = _sampler(exp, client_id, t)
            state = MomentState.zeros(model.layer_shapes, dtype=W_local[0].dtype)
            for step in range(steps):
                G = model.grad(W_local, sampler.next_batch())
                _ensure_finite(G, "gradient", t, client_id, step)
                G = moment_step(state, G, cfg)
                lr = schedule(t * steps + step)
                for w, g in zip(W_local, G):
                    w -= lr * g
            return W_local

        try:
            local_models = pool.map(client_round, list(range(len(exp.shards))))
        except DivergedError as e:
            logger.error(f"❌ Round {t} diverged: {e}")
            raise e.at(round=t)
        W = _mean(local_models)
        evaluator.set_weights(W)
        loss_value, grad_sq = evaluator.evaluate(round=t)

        record = RoundRecord(
            round=t,
            global_loss=loss_value,
            grad_norm_sq=grad_sq,
            uplink_params=P * len(local_models),
            downlink_params=P,
            client_uplinks=[P] * len(local_models),
        )
        record.seconds = _elapsed(config, started)
        trace.records.append(record)
        _log_round("fedfft", record, fed.rounds)

    trace.final_weights = copy_weights(W)
    return trace


# ── FedLoRA (FedIT / FFA-LoRA) ─────────────────────────────────────

def lora_factors(config: RunConfig, layer_shapes) -> tuple[WeightSet, WeightSet]:
    """Zero B factors and seeded A factors, one pair per layer."""
    seed = derive_seed(config.run.master_seed, "lora-init")
    r = config.lora.rank
    dtype = config.dtype
    A = [
        np.array(gen_projection(seed, r, d_n, config.lora.init_kind, layer, dtype=dtype).entries, copy=True)
        for layer, (_, d_n) in enumerate(layer_shapes)
    ]
    B = [np.zeros((d_m, r), dtype=dtype) for d_m, _ in layer_shapes]
    return B, A


def effective_weights(base: WeightSet, B: WeightSet, A: WeightSet, out: Optional[WeightSet] = None) -> WeightSet:
    """W^0 + B·A per layer."""
    out = copy_weights(base) if out is None else out
    for w, w0, b, a in zip(out, base, B, A):
        w[...] = w0
        apply_low_rank_update_(w, b, a)
    return out


def run_fedlora(config: RunConfig, experiment: Optional[Experiment] = None) -> TrainingTrace:
    """Low-rank factors B·A on top of the frozen W^0.

    fedit trains and averages both factors; ffa_lora freezes A and averages B only.
    """
    exp = experiment or build_experiment(config)
    fed = config.federation
    method = fed.method if fed.method in (Method.FEDIT, Method.FFA_LORA) else Method.FEDIT
    ffa = method == Method.FFA_LORA
    cfg = config.local_config()
    schedule = config.schedule()
    model = exp.model
    steps = cfg.local_iterations
    r = config.lora.rank

    base = copy_weights(exp.W0)
    B, A = lora_factors(config, model.layer_shapes)
    costs = round_costs(method, model.layer_shapes, r)
    evaluator = ShadowEvaluator(model, exp.shards, base)
    pool = ClientPool(fed.workers)
    loss0, grad0 = evaluator.evaluate(round=0)
    trace = TrainingTrace(method=method.value, initial_loss=loss0, initial_grad_norm_sq=grad0)
    logger.info(f"🚀 {method.value}: N={fed.num_clients} T={fed.rounds} r_lora={r} local steps={steps}")

    for t in range(fed.rounds):
        started = time.perf_counter()

        def client_round(client_id: int) -> tuple[WeightSet, WeightSet]:
            B_local, A_local = copy_weights(B), copy_weights(A)
            W_eff = effective_weights(base, B_local, A_local)
            sampler = _sampler(exp, client_id, t)
            state_B = MomentState.zeros([b.shape for b in B_local], dtype=B_local[0].dtype)
            state_A = MomentState.zeros([a.shape for a in A_local], dtype=A_local[0].dtype)
            for step in range(steps):
                batch = sampler.next_batch()
                lr = schedule(t * steps + step)
                if ffa:
                    G_B = model.grad_B(W_eff, A_local, batch)
                    _ensure_finite(G_B, "gradient", t, client_id, step)
                    G_B = moment_step(state_B, G_B, cfg)
                    for w, g, a, b in zip(W_eff, G_B, A_local, B_local):
                        apply_low_rank_update_(w, g, a, scale=-lr)
                        b -= lr * g
                else:
                    G = model.grad(W_eff, batch)
                    _ensure_finite(G, "gradient", t, client_id, step)
                    G_B = moment_step(state_B, [g @ a.T for g, a in zip(G, A_local)], cfg)
                    G_A = moment_step(state_A, [b.T @ g for g, b in zip(G, B_local)], cfg)
                    for b, g in zip(B_local, G_B):
                        b -= lr * g
                    for a, g in zip(A_local, G_A):
                        a -= lr * g
                    effective_weights(base, B_local, A_local, out=W_eff)
            return B_local, A_local

        try:
            factors = pool.map(client_round, list(range(len(exp.shards))))
        except DivergedError as e:
            logger.error(f"❌ Round {t} diverged: {e}")
            raise e.at(round=t)
        B = _mean([b for b, _ in factors])
        if not ffa:
            A = _mean([a for _, a in factors])
        W_global = effective_weights(base, B, A)
        loss_value, grad_sq = evaluator.evaluate(W_global, round=t)

        record = RoundRecord(
            round=t,
            global_loss=loss_value,
            grad_norm_sq=grad_sq,
            uplink_params=costs.uplink_params * len(factors),
            downlink_params=costs.downlink_params,
            client_uplinks=[costs.uplink_params] * len(factors),
        )
        record.seconds = _elapsed(config, started)
        trace.records.append(record)
        _log_round(method.value, record, fed.rounds)

    trace.final_weights = effective_weights(base, B, A)
    return trace


RUNNERS: dict[Method, Callable[[RunConfig, Optional[Experiment]], TrainingTrace]] = {
    Method.FEDKRSO: run_fedkrso,
    Method.FEDFFT: run_fedfft,
    Method.FEDIT: run_fedlora,
    Method.FFA_LORA: run_fedlora,
}


def run_method(config: RunConfig, experiment: Optional[Experiment] = None) -> TrainingTrace:
    return RUNNERS[config.federation.method](config, experiment)
