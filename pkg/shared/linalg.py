"""In-place low-rank updates and error metrics."""

from typing import Sequence

import numpy as np

DEFAULT_BLOCK_ROWS = 32


def apply_low_rank_update_(
    W: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    scale: float = 1.0,
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> np.ndarray:
    """W += scale * left @ right in place, one row block at a time.

    The full d_m x d_n product is never formed; the only temporary is a
    (block_rows x d_n) buffer.
    """
    d_m, d_n = W.shape
    if left.shape[0] != d_m or right.shape[1] != d_n or left.shape[1] != right.shape[0]:
        raise ValueError(f"shape mismatch: W{W.shape} += {left.shape} @ {right.shape}")
    rows = max(1, min(int(block_rows), d_m))
    buf = np.empty((rows, d_n), dtype=W.dtype)
    for start in range(0, d_m, rows):
        stop = min(start + rows, d_m)
        view = buf[: stop - start]
        np.matmul(left[start:stop], right, out=view)
        if scale != 1.0:
            view *= scale
        W[start:stop] += view
    return W


def frobenius_sq(mats: Sequence[np.ndarray]) -> float:
    return float(sum(np.vdot(m, m).real for m in mats))


def relative_error(actual: Sequence[np.ndarray], expected: Sequence[np.ndarray]) -> float:
    """‖actual − expected‖_F / ‖expected‖_F over a list of matrices."""
    num = sum(float(np.sum((a - e) ** 2)) for a, e in zip(actual, expected))
    den = frobenius_sq(expected)
    if den == 0.0:
        return float(np.sqrt(num))
    return float(np.sqrt(num / den))


def copy_weights(W: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [np.array(w, copy=True) for w in W]
