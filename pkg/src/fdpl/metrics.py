"""PSNR / SSIM and whole-set evaluation."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .degrade import DegradeConfig
from .dataset import image_pairs
from .srcnn import predict

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _check_same(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    a, b = _check_same(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation over positions where the whole window fits
    n = len(g)
    h, w = img.shape
    rows = sum(g[i] * img[i : h - n + 1 + i] for i in range(n))
    return sum(g[i] * rows[:, i : w - n + 1 + i] for i in range(n))


def ssim_map(a, b) -> np.ndarray:
    a, b = _check_same(a, b)
    if a.ndim != 2 or min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs 2-D images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    g = _gaussian_window()
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(a, b) -> float:
    """Mean SSIM, 11x11 Gaussian window (sigma 1.5), dynamic range 1."""
    return float(np.mean(ssim_map(a, b)))


@dataclass
class EvalReport:
    rows: list[tuple[str, float, float]] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r[1] for r in self.rows]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r[2] for r in self.rows]))

    def to_csv(self) -> str:
        lines = ["name,psnr,ssim"]
        lines += [f"{n},{p:.6f},{s:.6f}" for n, p, s in self.rows]
        lines.append(f"mean,{self.mean_psnr:.6f},{self.mean_ssim:.6f}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        width = max([4, *(len(n) for n, _, _ in self.rows)])
        lines = [f"{'name':<{width}}  {'PSNR':>10}  {'SSIM':>8}"]
        lines += [f"{n:<{width}}  {p:>10.6f}  {s:>8.6f}" for n, p, s in self.rows]
        lines.append(f"{'mean':<{width}}  {self.mean_psnr:>10.6f}  {self.mean_ssim:>8.6f}")
        return "\n".join(lines)


def load_eval_set(gt_dir: str | os.PathLike, cfg: DegradeConfig = DegradeConfig()):
    """``[(name, ground truth, degraded), ...]`` for every PNG in ``gt_dir``."""
    if not os.path.isdir(gt_dir):
        raise FileNotFoundError(f"evaluation directory not found: {gt_dir}")
    pairs = list(image_pairs(gt_dir, cfg))
    if not pairs:
        raise ValueError(f"no usable PNG images in {gt_dir}")
    return pairs


def evaluate_pairs(model, pairs) -> EvalReport:
    """Score ``model`` (or the degraded input itself when ``model`` is None)."""
    report = EvalReport()
    for name, gt, deg in pairs:
        out = deg if model is None else predict(model, deg)
        out = np.clip(out, 0.0, 1.0)
        report.rows.append((name, psnr(gt, out), ssim(gt, out)))
    return report


def evaluate_set(model, gt_dir: str | os.PathLike, cfg: DegradeConfig = DegradeConfig()) -> EvalReport:
    return evaluate_pairs(model, load_eval_set(gt_dir, cfg))
