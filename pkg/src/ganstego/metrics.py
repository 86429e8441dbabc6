"""Image-pair quality metrics: PSNR, RMSE, MAE and windowed SSIM.

PSNR, RMSE and MAE pool every channel of every pixel jointly. SSIM is the
standard Gaussian-window form (11x11, sigma 1.5, K1 = 0.01, K2 = 0.03) over
valid window positions, computed per channel and averaged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ExtentError
from .media.image import Image

MAX_VALUE = 255.0
WINDOW = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03
C1 = (K1 * MAX_VALUE) ** 2
C2 = (K2 * MAX_VALUE) ** 2

PAIR_KINDS = ("cover/stego", "secret/recovered")


def _pixels(img) -> np.ndarray:
    px = img.pixels if isinstance(img, Image) else np.asarray(img)
    return px.astype(np.float64)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    x, y = _pixels(a), _pixels(b)
    if x.shape != y.shape:
        raise ExtentError(f"image dimensions differ: {x.shape} vs {y.shape}")
    return x, y


def mse(a, b) -> float:
    x, y = _pair(a, b)
    return float(np.mean((x - y) ** 2))


def psnr_from_mse(value: float) -> float:
    if value == 0:
        return math.inf
    return 10.0 * math.log10(MAX_VALUE**2 / value)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    return psnr_from_mse(mse(a, b))


def rmse(a, b) -> float:
    return math.sqrt(mse(a, b))


def mae(a, b) -> float:
    x, y = _pair(a, b)
    return float(np.mean(np.abs(x - y)))


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(plane: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    rows = sliding_window_view(plane, k, axis=1) @ g
    return sliding_window_view(rows, k, axis=0) @ g


def ssim_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    g = gaussian_window()
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x**2
    syy = _filter_valid(y * y, g) - mu_y**2
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + C1) * (2 * sxy + C2)
    den = (mu_x**2 + mu_y**2 + C1) * (sxx + syy + C2)
    return num / den


def ssim(a, b) -> float:
    x, y = _pair(a, b)
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    if min(x.shape[0], x.shape[1]) < WINDOW:
        raise ExtentError(f"image {x.shape[0]}x{x.shape[1]} is smaller than the {WINDOW}x{WINDOW} SSIM window")
    vals = [ssim_map(x[..., c], y[..., c]).mean() for c in range(x.shape[2])]
    return float(np.clip(np.mean(vals), -1.0, 1.0))


@dataclass(frozen=True)
class MetricsReport:
    psnr_db: float
    ssim: float
    rmse: float
    mae: float
    pair_kind: str = "cover/stego"

    def as_dict(self) -> dict:
        return {"psnr": self.psnr_db, "ssim": self.ssim, "rmse": self.rmse, "mae": self.mae}


def compare(a, b, pair_kind: str = "cover/stego") -> MetricsReport:
    """All four metrics for one pair. SSIM is NaN when the image is below window size."""
    if pair_kind not in PAIR_KINDS:
        raise ValueError(f"unknown pair kind {pair_kind!r}")
    m = mse(a, b)
    try:
        s = ssim(a, b)
    except ExtentError:
        s = math.nan
    return MetricsReport(psnr_from_mse(m), s, math.sqrt(m), mae(a, b), pair_kind)
