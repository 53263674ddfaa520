import numpy as np
import pytest

from shared.errors import InvalidConfigurationError
from shared.rng import derive_rng, derive_seed
from simulator.sketch import SketchKind, gen_projection, make_seed_pool, spectral_norm

ORTHO = SketchKind.ROW_ORTHONORMAL_SCALED


# ── Seed pools ─────────────────────────────────────────────────────

def test_seed_pool_is_deterministic():
    assert make_seed_pool(7, 0, 3) == make_seed_pool(7, 0, 3)


def test_seed_pools_differ_across_rounds():
    a, b = make_seed_pool(7, 0, 3), make_seed_pool(7, 1, 3)
    assert a.seeds != b.seeds
    assert not set(a.seeds) & set(b.seeds)


def test_seed_pool_rejects_zero_k():
    with pytest.raises(InvalidConfigurationError) as err:
        make_seed_pool(7, 0, 0)
    assert err.value.field == "federation.K"


def test_derived_streams_are_independent_and_replayable():
    a = derive_rng(3, "batches", 0, 1).standard_normal(5)
    b = derive_rng(3, "batches", 0, 1).standard_normal(5)
    c = derive_rng(3, "batches", 1, 0).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert derive_seed(3, "partition") != derive_seed(3, "init")


# ── Projections ────────────────────────────────────────────────────

@pytest.mark.parametrize("kind", list(SketchKind))
def test_projection_is_bitwise_reproducible(kind):
    a = gen_projection(99, 3, 10, kind, layer_index=1)
    b = gen_projection(99, 3, 10, kind, layer_index=1)
    assert a.entries.tobytes() == b.entries.tobytes()
    assert a.entries.shape == (3, 10)


def test_layer_index_changes_the_matrix():
    a = gen_projection(99, 3, 10, layer_index=0).entries
    b = gen_projection(99, 3, 10, layer_index=1).entries
    assert not np.allclose(a, b)


def test_projection_is_read_only():
    P = gen_projection(5, 2, 4)
    with pytest.raises(ValueError):
        P.entries[0, 0] = 1.0


def test_square_orthonormal_is_orthogonal():
    P = gen_projection(1, 4, 4, ORTHO).entries
    np.testing.assert_allclose(P @ P.T, np.eye(4), atol=1e-12)


def test_orthonormal_scaled_rows_and_spectral_norm():
    P = gen_projection(2, 2, 8, ORTHO)
    gram = P.entries @ P.entries.T
    expected = 4.0 * np.eye(2)
    assert np.linalg.norm(gram - expected) / np.linalg.norm(expected) < 1e-10
    assert spectral_norm(P) == pytest.approx(2.0, rel=1e-12)


def test_orthonormal_rank_above_width_is_rejected():
    with pytest.raises(InvalidConfigurationError):
        gen_projection(1, 9, 8, ORTHO)


def test_zero_rank_is_rejected():
    with pytest.raises(InvalidConfigurationError):
        gen_projection(1, 0, 8)


def test_float32_projection():
    assert gen_projection(1, 2, 8, dtype=np.float32).entries.dtype == np.float32


@pytest.mark.parametrize("kind", list(SketchKind))
def test_projection_is_unbiased(kind):
    n = 20_000
    mean = np.zeros((8, 8))
    for seed in range(n):
        P = gen_projection(seed, 2, 8, kind).entries
        mean += P.T @ P
    mean /= n
    assert np.max(np.abs(mean - np.eye(8))) < 0.05


def test_gaussian_entry_variance():
    samples = np.stack([gen_projection(seed, 2, 8).entries for seed in range(20_000)])
    assert samples.var() == pytest.approx(0.5, rel=0.05)
    assert abs(samples.mean()) < 0.01


def _sketch_mean_error(G, seeds, r):
    total = np.zeros_like(G)
    for seed in seeds:
        P = gen_projection(seed, r, G.shape[1]).entries
        total += (G @ P.T) @ P
    return np.max(np.abs(total / len(seeds) - G))


def test_sketched_matrix_mean_converges_small():
    G = np.random.default_rng(0).standard_normal((6, 10))
    coarse = _sketch_mean_error(G, range(500), 3)
    fine = _sketch_mean_error(G, range(50_000), 3)
    assert fine < coarse
    assert fine < 0.05 * np.max(np.abs(G))


@pytest.mark.slow
def test_sketched_matrix_mean_converges_full_scale():
    G = np.random.default_rng(0).standard_normal((32, 64))
    coarse = _sketch_mean_error(G, range(10_000), 4)
    fine = _sketch_mean_error(G, range(100_000), 4)
    assert fine <= 0.05 * np.max(np.abs(G))
    assert fine < coarse
