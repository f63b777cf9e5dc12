"""Segmentation and reconstruction quality metrics: Dice, PSNR, SSIM."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imagedata import as_slice

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def dice(a, b) -> float:
    """Dice overlap 2|a n b| / (|a| + |b|) between two binary masks.

    Two empty masks agree that nothing is present and score 1; an empty mask
    against a nonempty one scores 0.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def psnr(x, y, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give math.inf."""
    x = as_slice(x)
    y = as_slice(y)
    if x.shape != y.shape:
        raise ValueError(f"slice shapes differ: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _local_weighted(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # valid-mode weighted local means via a strided window view
    view = np.lib.stride_tricks.sliding_window_view(img, kernel.shape)
    return np.tensordot(view, kernel, axes=([2, 3], [0, 1]))


def ssim(x, y, peak: float = 255.0) -> float:
    """Mean local structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Stabilizers are C1 = (0.01 * peak)^2 and C2 = (0.03 * peak)^2. The mean
    is taken over window placements fully inside the image.
    """
    x = as_slice(x)
    y = as_slice(y)
    if x.shape != y.shape:
        raise ValueError(f"slice shapes differ: {x.shape} vs {y.shape}")
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window: {x.shape}")

    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2

    mu_x = _local_weighted(x, kernel)
    mu_y = _local_weighted(y, kernel)
    var_x = _local_weighted(x * x, kernel) - mu_x * mu_x
    var_y = _local_weighted(y * y, kernel) - mu_y * mu_y
    cov = _local_weighted(x * y, kernel) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    """Per-sample metric values with their mean and population std."""
    values: list = field(default_factory=list)
    mean: float = 0.0
    std: float = 0.0

    def __str__(self):
        return f"{self.mean:.4f} ± {self.std:.4f}"


def report(values) -> MetricReport:
    """Summarize per-sample values as mean +/- population standard deviation."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("cannot summarize an empty value list")
    arr = np.asarray(values, dtype=np.float64)
    return MetricReport(values=values, mean=float(arr.mean()), std=float(arr.std()))
