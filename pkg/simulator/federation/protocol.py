"""Server and client sides of a FedKRSO round.

The server only ever holds seeds and accumulators; clients rebuild the
global model from the previous pool, train locally and upload the
per-seed blocks they touched.
"""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from config.settings import settings
from shared.errors import ProtocolError
from shared.linalg import apply_low_rank_update_, copy_weights
from shared.rng import derive_rng
from simulator.federation.models import ClientState, Downlink, GlobalAccumulatorSet, Uplink
from simulator.local_trainer.models import LocalAccumulatorSet, LocalConfig, LocalTrainingResult
from simulator.local_trainer.trainer import LocalTrainer
from simulator.sketch.generator import gen_projection, make_seed_pool
from simulator.sketch.models import SeedPool, SketchKind
from simulator.tasks.data import BatchSampler
from simulator.tasks.models import Dataset, WeightSet
from simulator.tasks.objectives import TaskModel

logger = logging.getLogger(__name__)


# ── Reconstruction & aggregation ───────────────────────────────────

def reconstruct_global(
    W_prev: WeightSet,
    B: GlobalAccumulatorSet,
    prev_pool: Optional[SeedPool],
    *,
    rank: Optional[int] = None,
    kind: SketchKind = SketchKind.GAUSSIAN,
    inplace: bool = False,
    block_rows: int = settings.block_rows,
) -> WeightSet:
    """W_prev + Σ_k B_k · P_k, with every P_k regenerated from prev_pool."""
    W = W_prev if inplace else copy_weights(W_prev)
    if B.is_initial:
        if not B.is_zero():
            raise ProtocolError("initial accumulators must be zero")
        return W
    if prev_pool is None:
        raise ProtocolError(f"accumulators of round {B.round} arrived without a cached pool")
    if prev_pool.round != B.round:
        raise ProtocolError(f"accumulators belong to round {B.round} but the cached pool is from round {prev_pool.round}")
    if prev_pool.K != B.K:
        raise ProtocolError(f"pool holds {prev_pool.K} seeds but {B.K} accumulator blocks arrived")
    if len(B.block_shapes) != len(W):
        raise ProtocolError(f"{len(B.block_shapes)} accumulator layers for {len(W)} weight matrices")

    rank = rank or B.block_shapes[0][1]
    for seed, layers in zip(prev_pool.seeds, B.blocks):
        if not any(np.any(b) for b in layers):
            continue
        for layer, (w, b) in enumerate(zip(W, layers)):
            P = gen_projection(seed, rank, w.shape[1], kind, layer, dtype=w.dtype)
            apply_low_rank_update_(w, b, P.entries, block_rows=block_rows)
    return W


def aggregate(
    client_accs: Sequence[LocalAccumulatorSet],
    K: int,
    *,
    num_clients: Optional[int] = None,
    dtype=np.float64,
) -> GlobalAccumulatorSet:
    """B_k = (1/N) Σ_n B_{k,n}; untouched blocks count as zero."""
    if not client_accs:
        raise ProtocolError("no client reported")
    ids = [a.client_id for a in client_accs]
    if len(set(ids)) != len(ids):
        raise ProtocolError(f"duplicate client reports: {sorted(ids)}")
    if num_clients is not None and len(ids) != num_clients:
        missing = sorted(set(range(num_clients)) - set(ids))
        raise ProtocolError(f"expected {num_clients} clients, got {len(ids)} (missing {missing})")

    first = client_accs[0]
    for acc in client_accs:
        if acc.round != first.round:
            raise ProtocolError(f"client {acc.client_id} reported round {acc.round}, expected {first.round}")
        if acc.K != K:
            raise ProtocolError(f"client {acc.client_id} reported K={acc.K}, expected {K}")
        if acc.block_shapes != first.block_shapes:
            raise ProtocolError(f"client {acc.client_id} block shapes {acc.block_shapes} != {first.block_shapes}")
        for k, layers in acc.blocks.items():
            if tuple(b.shape for b in layers) != first.block_shapes:
                raise ProtocolError(f"client {acc.client_id} seed {k}: malformed block")

    n = len(client_accs)
    blocks = []
    for k in range(K):
        sums = [np.zeros(s, dtype=dtype) for s in first.block_shapes]
        for acc in client_accs:
            if k in acc.blocks:
                for total, b in zip(sums, acc.blocks[k]):
                    total += b
        blocks.append(tuple(s / n for s in sums))
    return GlobalAccumulatorSet(round=first.round, K=K, block_shapes=first.block_shapes, blocks=tuple(blocks))


# ── Protocol parties ───────────────────────────────────────────────

class KSeedServer:
    """Generates seed pools and averages uploaded accumulators; never stores weights."""

    def __init__(self, master_seed: int, K: int, block_shapes, num_clients: int, dtype=np.float64):
        self.master_seed = master_seed
        self.K = K
        self.num_clients = num_clients
        self.dtype = dtype
        self.accumulators = GlobalAccumulatorSet.zeros(K, block_shapes, dtype=dtype)
        self.pool: Optional[SeedPool] = None

    def begin_round(self, round: int) -> Downlink:
        self.pool = make_seed_pool(self.master_seed, round, self.K)
        return Downlink(round=round, pool=self.pool, accumulators=self.accumulators)

    def receive(self, uplinks: Sequence[Uplink]) -> GlobalAccumulatorSet:
        if self.pool is None:
            raise ProtocolError("uploads received before any round began")
        accs = [u.accumulators for u in sorted(uplinks, key=lambda u: u.client_id)]
        for acc in accs:
            if acc.round != self.pool.round:
                raise ProtocolError(f"client {acc.client_id} uploaded for round {acc.round} during round {self.pool.round}")
        self.accumulators = aggregate(accs, self.K, num_clients=self.num_clients, dtype=self.dtype)
        return self.accumulators


class FedKRSOClient:
    """Reconstructs W^t, trains locally and uploads its touched accumulator blocks."""

    def __init__(
        self,
        client_id: int,
        model: TaskModel,
        shard: Dataset,
        W0: WeightSet,
        cfg: LocalConfig,
        master_seed: int,
        block_rows: int = settings.block_rows,
    ):
        self.state = ClientState(client_id=client_id, W=copy_weights(W0), shard=shard)
        self.model = model
        self.cfg = cfg
        self.master_seed = master_seed
        self.block_rows = block_rows
        self.trainer = LocalTrainer(model, cfg, block_rows=block_rows)
        self.last_result: Optional[LocalTrainingResult] = None

    @property
    def client_id(self) -> int:
        return self.state.client_id

    @property
    def W(self) -> WeightSet:
        return self.state.W

    def reconstruct(self, downlink: Downlink) -> WeightSet:
        reconstruct_global(
            self.state.W,
            downlink.accumulators,
            self.state.prev_pool,
            rank=self.cfg.rank,
            kind=self.cfg.sketch_kind,
            inplace=True,
            block_rows=self.block_rows,
        )
        return self.state.W

    def train(
        self,
        downlink: Downlink,
        schedule: Optional[Callable[[int], float]] = None,
        step_offset: int = 0,
        debug: bool = False,
    ) -> Uplink:
        """Local training on the reconstructed model; the pool is cached for the next round."""
        t = downlink.round
        cid = self.state.client_id
        result = self.trainer.train(
            self.state.W,
            downlink.pool,
            self.state.shard,
            sampler=BatchSampler(self.state.shard, self.cfg.batch_size, derive_rng(self.master_seed, "batches", cid, t)),
            seed_rng=derive_rng(self.master_seed, "seed-choice", cid, t),
            schedule=schedule,
            step_offset=step_offset,
            client_id=cid,
            round=t,
            debug=debug,
        )
        self.state.prev_pool = downlink.pool
        self.last_result = result
        logger.debug(f"client {cid} round {t}: touched seeds {sorted(result.accumulators.touched)}")
        return Uplink(accumulators=result.accumulators)

    def handle(self, downlink: Downlink, **kwargs) -> Uplink:
        self.reconstruct(downlink)
        return self.train(downlink, **kwargs)
