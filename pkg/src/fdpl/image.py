"""PNG I/O and colour conversion.

Images are plain numpy arrays: an RGB image is ``(H, W, 3)`` float64 in
[0, 1], an image plane (luminance or chroma) is ``(H, W)`` float64.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

# full-range BT.601 (JPEG/JFIF convention)
_RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])

# PIL modes holding at most 8 bits per channel
_SUPPORTED_MODES = {"1", "L", "LA", "P", "RGB", "RGBA"}


class ImageFormatError(ValueError):
    """Raised for files that are not 8-bit PNGs."""


def check_plane(plane: np.ndarray, name: str = "plane") -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or plane.shape[0] < 1 or plane.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {plane.shape}")
    if not np.all(np.isfinite(plane)):
        raise ValueError(f"{name} contains NaN or Inf")
    return plane


def check_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"RGB image must have shape (H, W, 3), got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("RGB image contains NaN or Inf")
    return img


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read an 8-bit PNG as an ``(H, W, 3)`` float image in [0, 1].

    Grayscale files are replicated to three channels; alpha is dropped.
    """
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise ImageFormatError(f"{path}: expected a PNG file, got {im.format}")
            if im.mode not in _SUPPORTED_MODES:
                raise ImageFormatError(
                    f"{path}: unsupported PNG mode {im.mode!r} (only 8-bit RGB/grayscale)"
                )
            im.load()
            rgb = im.convert("RGB")
    except OSError as exc:
        if isinstance(exc, ImageFormatError):
            raise
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return np.asarray(rgb, dtype=np.float64) / 255.0


def to_uint8(values: np.ndarray) -> np.ndarray:
    # round half up, after clamping
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(plane: np.ndarray, path: str | os.PathLike) -> None:
    """Write a plane as an 8-bit grayscale PNG (values clamped to [0, 1])."""
    plane = check_plane(plane)
    Image.fromarray(to_uint8(plane), mode="L").save(path, format="PNG")


def save_rgb(img: np.ndarray, path: str | os.PathLike) -> None:
    img = check_rgb(img)
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")


def rgb_to_ycbcr(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    img = check_rgb(img)
    ycc = img @ _RGB_TO_YCBCR.T + _CHROMA_OFFSET
    return ycc[..., 0], ycc[..., 1], ycc[..., 2]


def ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    y, cb, cr = (check_plane(p, n) for p, n in ((y, "y"), (cb, "cb"), (cr, "cr")))
    if not (y.shape == cb.shape == cr.shape):
        raise ValueError(f"plane shapes differ: {y.shape}, {cb.shape}, {cr.shape}")
    ycc = np.stack([y, cb, cr], axis=-1) - _CHROMA_OFFSET
    return ycc @ _YCBCR_TO_RGB.T


def load_luminance(path: str | os.PathLike) -> np.ndarray:
    return rgb_to_ycbcr(load_image(path))[0]


def list_pngs(directory: str | os.PathLike) -> list[str]:
    """PNG files in ``directory``, sorted by filename."""
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".png"))
    return [os.path.join(directory, n) for n in names]
