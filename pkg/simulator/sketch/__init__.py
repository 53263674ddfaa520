from simulator.sketch.models import ProjectionMatrix, Seed, SeedPool, SketchKind
from simulator.sketch.generator import gen_projection, make_seed_pool, spectral_norm

__all__ = [
    "ProjectionMatrix",
    "Seed",
    "SeedPool",
    "SketchKind",
    "gen_projection",
    "make_seed_pool",
    "spectral_norm",
]
