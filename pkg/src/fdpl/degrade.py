"""Resampling, blur and the super-resolution degradation pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import check_plane

BLOCK = 8


@dataclass(frozen=True)
class DegradeConfig:
    scale: int = 3
    blur_sigma: float = 1.0
    blur_kernel_radius: int = 2

    def __post_init__(self):
        if int(self.scale) != self.scale or self.scale < 2:
            raise ValueError(f"scale must be an integer >= 2, got {self.scale}")
        if not self.blur_sigma > 0:
            raise ValueError(f"blur_sigma must be positive, got {self.blur_sigma}")
        if int(self.blur_kernel_radius) != self.blur_kernel_radius or self.blur_kernel_radius < 1:
            raise ValueError(f"blur_kernel_radius must be >= 1, got {self.blur_kernel_radius}")

    @property
    def grid(self) -> int:
        """Side multiple the ground truth is cropped to."""
        return math.lcm(self.scale, BLOCK)


def keys_kernel(x, a: float = -0.5):
    """Keys cubic convolution kernel."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """``(n_out, n_in)`` matrix applying 1-D bicubic resampling along one axis.

    Pixel centres are aligned (``src = (i + 0.5) * n_in / n_out - 0.5``) and
    out-of-range taps are clamped to the border sample.
    """
    mat = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * ratio - 0.5
        base = math.floor(src)
        for t in range(base - 1, base + 3):
            mat[i, min(max(t, 0), n_in - 1)] += keys_kernel(src - t)
    return mat


def bicubic_resize(plane: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    plane = check_plane(plane)
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    h, w = plane.shape
    rows = resample_matrix(h, out_h)
    cols = resample_matrix(w, out_w)
    return rows @ plane @ cols.T


def gaussian_taps(sigma: float, radius: int) -> np.ndarray:
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _filter_axis(plane: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    radius = len(taps) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(plane, pad, mode="edge")
    n = plane.shape[axis]
    out = np.zeros_like(plane)
    for i, tap in enumerate(taps):
        out += tap * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def gaussian_blur(plane: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    """Separable Gaussian blur with replicated borders."""
    plane = check_plane(plane)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    taps = gaussian_taps(sigma, radius)
    return _filter_axis(_filter_axis(plane, taps, 0), taps, 1)


def crop_to_grid(plane: np.ndarray, multiple: int) -> np.ndarray:
    """Centre-crop so both sides are multiples of ``multiple``."""
    plane = check_plane(plane)
    h, w = plane.shape
    ch, cw = (h // multiple) * multiple, (w // multiple) * multiple
    if ch == 0 or cw == 0:
        raise ValueError(
            f"image of size {w}x{h} is smaller than one {multiple}-pixel crop step"
        )
    top, left = (h - ch) // 2, (w - cw) // 2
    return plane[top : top + ch, left : left + cw]


def degrade_pair(
    plane: np.ndarray, cfg: DegradeConfig = DegradeConfig(), multiple: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(cropped ground truth, degraded input)`` of equal size.

    The ground truth is centre-cropped to a multiple of ``multiple`` (default
    ``lcm(scale, 8)``). The pipeline is bicubic downsample by ``cfg.scale``,
    Gaussian blur of the low-resolution image, then bicubic upsample back to
    the cropped size. When the cropped size is not a multiple of the scale the
    low-resolution size is rounded.
    """
    plane = check_plane(plane)
    multiple = cfg.grid if multiple is None else multiple
    if min(plane.shape) < cfg.scale:
        raise ValueError(f"image {plane.shape[1]}x{plane.shape[0]} smaller than scale {cfg.scale}")
    gt = crop_to_grid(plane, multiple)
    h, w = gt.shape
    low = bicubic_resize(gt, max(1, round(w / cfg.scale)), max(1, round(h / cfg.scale)))
    low = gaussian_blur(low, cfg.blur_sigma, cfg.blur_kernel_radius)
    return gt, bicubic_resize(low, w, h)


def degrade(plane: np.ndarray, cfg: DegradeConfig = DegradeConfig()) -> np.ndarray:
    return degrade_pair(plane, cfg)[1]


def upscale(plane: np.ndarray, scale: int) -> np.ndarray:
    """Plain bicubic enlargement by an integer factor."""
    h, w = np.shape(plane)
    return bicubic_resize(plane, w * scale, h * scale)
