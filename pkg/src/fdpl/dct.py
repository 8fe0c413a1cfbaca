"""Orthonormal 8x8 DCT-II and blockwise tiling of planes.

Coefficient index ``(j, k)``: ``j`` is vertical frequency (rows), ``k``
horizontal. A coefficient grid is an array of shape ``(..., bh, bw, 8, 8)``
where tile ``(bi, bj)`` covers rows ``8*bi:8*bi+8`` and columns
``8*bj:8*bj+8`` of the source plane.
"""

from __future__ import annotations

import numpy as np

N = 8


def dct_matrix(n: int = N) -> np.ndarray:
    """Orthonormal DCT-II basis, ``D[j, m] = a(j) cos(pi j (m + 1/2) / n)``."""
    j = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = np.cos(np.pi * j * (m + 0.5) / n) * np.sqrt(2.0 / n)
    mat[0] /= np.sqrt(2.0)
    return mat


_D = dct_matrix()


def _check_block(block) -> np.ndarray:
    block = np.asarray(block, dtype=np.float64)
    if block.shape[-2:] != (N, N):
        raise ValueError(f"expected trailing shape (8, 8), got {block.shape}")
    return block


def dct2_8x8(block) -> np.ndarray:
    """Forward transform; broadcasts over leading axes."""
    return _D @ _check_block(block) @ _D.T


def idct2_8x8(coeffs) -> np.ndarray:
    return _D.T @ _check_block(coeffs) @ _D


def to_blocks(plane: np.ndarray) -> np.ndarray:
    """``(..., H, W)`` -> ``(..., H/8, W/8, 8, 8)`` view of non-overlapping tiles."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape[-2:]
    if h % N or w % N:
        raise ValueError(f"plane size {w}x{h} is not divisible by {N}")
    lead = plane.shape[:-2]
    tiles = plane.reshape(*lead, h // N, N, w // N, N)
    return np.swapaxes(tiles, -3, -2)


def from_blocks(blocks: np.ndarray) -> np.ndarray:
    bh, bw = blocks.shape[-4:-2]
    lead = blocks.shape[:-4]
    return np.swapaxes(blocks, -3, -2).reshape(*lead, bh * N, bw * N)


def blockwise_dct(plane: np.ndarray) -> np.ndarray:
    return dct2_8x8(to_blocks(plane))


def blockwise_idct(grid: np.ndarray) -> np.ndarray:
    return from_blocks(idct2_8x8(grid))
