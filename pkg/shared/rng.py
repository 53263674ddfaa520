"""Named random sub-streams derived from a single master seed.

Every random draw in the simulator goes through `derive_rng`, so any
component (pool, batches, partition, init) can be replayed in isolation.
The bit generator is numpy's counter-based Philox.
"""

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def stream_tag(stream: str) -> int:
    # crc32, never hash(): hash() is salted per process
    return zlib.crc32(stream.encode("utf-8")) & 0xFFFFFFFF


def derive_rng(master_seed: int, stream: str, *indices: int) -> np.random.Generator:
    """Return an independent generator for (master_seed, stream, *indices)."""
    entropy = [int(master_seed) & SEED_MASK, stream_tag(stream), *(int(i) for i in indices)]
    if any(v < 0 for v in entropy):
        raise ValueError(f"negative stream index in {entropy}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(master_seed: int, stream: str, *indices: int) -> int:
    """Draw one 64-bit seed from a named sub-stream."""
    rng = derive_rng(master_seed, stream, *indices)
    return int(rng.integers(0, SEED_MASK, dtype=np.uint64, endpoint=True))
