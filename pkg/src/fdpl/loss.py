"""Frequency-domain perceptual loss, its weights and the pixel MSE baseline.

All losses accept a single plane ``(H, W)`` or a batch ``(B, H, W)``; for a
batch the value is the mean of the per-plane losses and the gradient is the
gradient of that mean.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .dct import blockwise_dct, blockwise_idct

# JPEG standard (ITU T.81, Annex K.1) luminance table
JPEG_LUMINANCE_QTABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
JPEG_LUMINANCE_QTABLE.flags.writeable = False

DEFAULT_EPSILON = 1e-3
D_FLOOR = 1e-6
LOSS_KINDS = ("mse", "fdpl", "fdpl_at")
REDUCTIONS = ("tile", "aggregate")


def check_weights(w, name: str = "weight matrix") -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (8, 8):
        raise ValueError(f"{name} must be 8x8, got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError(f"{name} entries must be finite and positive")
    return w


def jpeg_luminance_qtable() -> np.ndarray:
    return JPEG_LUMINANCE_QTABLE.copy()


def antidiagonal_transpose(w) -> np.ndarray:
    """Reflect across the anti-diagonal: ``out[j, k] = w[7 - k, 7 - j]``."""
    w = np.asarray(w)
    if w.shape != (8, 8):
        raise ValueError(f"expected an 8x8 matrix, got {w.shape}")
    return w[::-1, ::-1].T.copy()


@dataclass
class DiffMatrixStats:
    d: np.ndarray
    num_blocks: int
    epsilon: float
    raw: np.ndarray  # per-frequency mean before rescaling and flooring
    reduction: str = "tile"


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise ValueError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def compute_diff_matrix(
    pairs: Iterable[tuple[np.ndarray, np.ndarray]],
    epsilon: float = DEFAULT_EPSILON,
    reduction: str = "tile",
) -> DiffMatrixStats:
    """Mean relative per-frequency difference between ground truth and degraded planes.

    ``reduction="tile"`` averages ``|C_gt - C_deg| / (|C_gt| + epsilon)`` over
    all aligned tiles of all pairs. ``reduction="aggregate"`` divides the
    mean absolute difference by the mean absolute ground-truth coefficient,
    ``mean|C_gt - C_deg| / (mean|C_gt| + epsilon)``, which is not dominated by
    tiles whose ground-truth coefficient is near zero. Both agree on a single
    tile. The result is rescaled to mean 1 and floored at ``D_FLOOR``.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if reduction not in REDUCTIONS:
        raise ValueError(f"reduction must be one of {REDUCTIONS}, got {reduction!r}")
    total = np.zeros((8, 8))
    magnitude = np.zeros((8, 8))
    count = 0
    for gt, deg in pairs:
        _check_pair(gt, deg)
        c_gt = blockwise_dct(gt).reshape(-1, 8, 8)
        c_deg = blockwise_dct(deg).reshape(-1, 8, 8)
        diff = np.abs(c_gt - c_deg)
        if reduction == "tile":
            diff = diff / (np.abs(c_gt) + epsilon)
        for r in diff:  # fixed accumulation order
            total += r
        for m in np.abs(c_gt):
            magnitude += m
        count += len(diff)
    if count == 0:
        raise ValueError("no image pairs given")
    raw = total / count
    if reduction == "aggregate":
        raw = raw / (magnitude / count + epsilon)
    mean = raw.mean()
    d = raw / mean if mean > 0 else raw.copy()
    return DiffMatrixStats(np.maximum(d, D_FLOOR), count, epsilon, raw, reduction)


def combined_weights(q, d) -> np.ndarray:
    return (1.0 / check_weights(q, "q")) * check_weights(d, "d")


def _num_blocks(shape) -> int:
    lead = int(np.prod(shape[:-2])) if len(shape) > 2 else 1
    return lead * (shape[-2] // 8) * (shape[-1] // 8)


def fdpl_loss(gt, out, q, d) -> float:
    _check_pair(gt, out)
    diff = blockwise_dct(gt) - blockwise_dct(out)
    w = combined_weights(q, d)
    return float(np.sum(diff * diff * w) / _num_blocks(np.shape(gt)))


def fdpl_gradient(gt, out, q, d) -> np.ndarray:
    """Gradient of :func:`fdpl_loss` with respect to ``out``."""
    _check_pair(gt, out)
    diff = blockwise_dct(gt) - blockwise_dct(out)
    w = combined_weights(q, d)
    # orthonormal transform: the adjoint of the forward DCT is the inverse
    return blockwise_idct(-2.0 / _num_blocks(np.shape(gt)) * diff * w)


def mse_loss(gt, out) -> float:
    _check_pair(gt, out)
    diff = np.asarray(gt, dtype=np.float64) - out
    return float(np.mean(diff * diff))


def mse_gradient(gt, out) -> np.ndarray:
    _check_pair(gt, out)
    diff = np.asarray(gt, dtype=np.float64) - out
    return -2.0 * diff / diff.size


class MSELoss:
    kind = "mse"

    def __call__(self, gt, out) -> tuple[float, np.ndarray]:
        return mse_loss(gt, out), mse_gradient(gt, out)


class FDPLLoss:
    """FDPL with fixed ``q`` and ``d``; ``transpose_q`` gives the FDPL-AT variant."""

    def __init__(self, d, q=None, transpose_q: bool = False):
        q = jpeg_luminance_qtable() if q is None else check_weights(q, "q")
        if transpose_q:
            q = antidiagonal_transpose(q)
        self.q = q
        self.d = check_weights(d, "d")
        self.kind = "fdpl_at" if transpose_q else "fdpl"

    def __call__(self, gt, out) -> tuple[float, np.ndarray]:
        return fdpl_loss(gt, out, self.q, self.d), fdpl_gradient(gt, out, self.q, self.d)


def make_loss(kind: str, d=None):
    kind = kind.replace("-", "_")
    if kind == "mse":
        return MSELoss()
    if kind in ("fdpl", "fdpl_at"):
        if d is None:
            raise ValueError(f"loss {kind!r} needs a difference matrix")
        return FDPLLoss(d, transpose_q=kind == "fdpl_at")
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def save_weight_matrix(w, path: str | os.PathLike, header: Iterable[str] = ()) -> None:
    w = np.asarray(w, dtype=np.float64)
    with open(path, "w") as f:
        for line in header:
            f.write(f"# {line}\n")
        for row in w:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_weight_matrix(path: str | os.PathLike) -> np.ndarray:
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric entry") from None
    if len(rows) != 8 or any(len(r) != 8 for r in rows):
        raise ValueError(f"{path}: expected 8 rows of 8 values")
    return check_weights(np.array(rows), str(path))
