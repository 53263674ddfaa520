"""Seed pools and deterministic projection matrices.

Both sides of the protocol call these functions with the same inputs and
get bitwise-identical results, so projection matrices never travel over
the wire; only seeds do.
"""

import logging

import numpy as np

from shared.errors import InvalidConfigurationError
from shared.rng import SEED_MASK, derive_rng
from simulator.sketch.models import ProjectionMatrix, SeedPool, SketchKind

logger = logging.getLogger(__name__)


def make_seed_pool(master_seed: int, round: int, K: int) -> SeedPool:
    """Generate the pool S^t of K seeds for round t.

    The round index is mixed into the stream, so pools of different rounds
    are independent. Seeds within a pool are not deduplicated.
    """
    if K < 1:
        raise InvalidConfigurationError(f"K must be >= 1, got {K}", field="federation.K")
    if round < 0:
        raise InvalidConfigurationError(f"round must be >= 0, got {round}", field="round")
    rng = derive_rng(master_seed, "pool", round)
    seeds = rng.integers(0, SEED_MASK, size=K, dtype=np.uint64, endpoint=True)
    return SeedPool(round=round, seeds=tuple(int(s) for s in seeds))


def gen_projection(
    seed: int,
    r: int,
    d_n: int,
    kind: SketchKind = SketchKind.GAUSSIAN,
    layer_index: int = 0,
    dtype: np.dtype = np.float64,
) -> ProjectionMatrix:
    """Regenerate P_k for one layer from its seed.

    gaussian: entries i.i.d. N(0, 1/r), so E[PᵀP] = I.
    row_orthonormal_scaled: r orthonormalized Gaussian rows scaled by
    sqrt(d_n/r), so P Pᵀ = (d_n/r) I_r and E[PᵀP] = I.
    """
    kind = SketchKind(kind)
    if r < 1 or d_n < 1:
        raise InvalidConfigurationError(f"need r >= 1 and d_n >= 1, got r={r}, d_n={d_n}", field="sketch.rank")
    if kind == SketchKind.ROW_ORTHONORMAL_SCALED and r > d_n:
        raise InvalidConfigurationError(
            f"row_orthonormal_scaled needs r <= d_n, got r={r}, d_n={d_n}", field="sketch.rank"
        )

    rng = derive_rng(seed, "projection", layer_index)
    if kind == SketchKind.GAUSSIAN:
        entries = rng.standard_normal((r, d_n)) / np.sqrt(r)
    else:
        gauss = rng.standard_normal((d_n, r))
        q, upper = np.linalg.qr(gauss)
        # sign fix makes Q Haar-distributed rather than QR-convention dependent
        signs = np.sign(np.diag(upper))
        signs[signs == 0] = 1.0
        entries = (q * signs).T * np.sqrt(d_n / r)

    entries = np.ascontiguousarray(entries, dtype=dtype)
    return ProjectionMatrix(entries=entries, kind=kind, seed=int(seed), layer_index=int(layer_index))


def spectral_norm(P: ProjectionMatrix | np.ndarray) -> float:
    entries = P.entries if isinstance(P, ProjectionMatrix) else P
    return float(np.linalg.norm(entries, ord=2))
