"""Synthetic cover images and fixture datasets.

Covers are smooth random fields (low-frequency cosines, a gradient and a few
Gaussian blobs) with mild sensor-like noise. Intensities are drawn on a
reduced 0..204 scale and then contrast-stretched by 1.25 to the full 8-bit
range, the way a levels adjustment leaves a comb-shaped histogram. That
comb is what pairs-of-values steganalysis keys on, and full-capacity LSB
embedding erases it.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .media.image import Image, save_image

BASE_LEVELS = 204
STRETCH = 255 / BASE_LEVELS


def _field(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy /= max(h, 1)
    xx /= max(w, 1)
    f = rng.uniform(-1, 1) * xx + rng.uniform(-1, 1) * yy
    for _ in range(4):
        fy, fx = rng.uniform(0.3, 3.0, size=2)
        ph = rng.uniform(0, 2 * np.pi)
        f += rng.uniform(0.2, 0.6) * np.cos(2 * np.pi * (fy * yy + fx * xx) + ph)
    for _ in range(3):
        cy, cx = rng.uniform(0, 1, size=2)
        s = rng.uniform(0.05, 0.3)
        f += rng.uniform(-0.8, 0.8) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    return f


def synthetic_cover(rng: np.random.Generator, height: int = 256, width: int = 256,
                    channels: int = 3, noise: float = 1.0) -> Image:
    """One smooth textured cover with a stretched (comb) histogram."""
    lum = _field(rng, height, width)
    planes = []
    for _ in range(channels):
        p = lum + 0.35 * _field(rng, height, width)
        planes.append(p)
    f = np.stack(planes, axis=-1)
    lo, hi = f.min(), f.max()
    # keep a margin so noise rarely saturates
    f = (f - lo) / max(hi - lo, 1e-12) * rng.uniform(0.6, 0.9) * BASE_LEVELS
    f += rng.uniform(0.05, 0.3) * BASE_LEVELS * (1 - f.max() / BASE_LEVELS)
    f += rng.normal(0.0, noise, size=f.shape)
    base = np.clip(np.floor(f + 0.5), 0, BASE_LEVELS)
    pixels = np.floor(base * STRETCH + 0.5).astype(np.uint8)
    return Image(pixels)


def synthetic_covers(n: int, seed: int = 0, height: int = 256, width: int = 256,
                     channels: int = 3) -> list[Image]:
    ss = np.random.SeedSequence(seed)
    return [synthetic_cover(np.random.default_rng(child), height, width, channels) for child in ss.spawn(n)]


def write_dataset(directory, n: int, seed: int = 0, height: int = 256, width: int = 256,
                  channels: int = 3) -> list[Path]:
    """Write ``n`` synthetic covers as cover_0000.png, cover_0001.png, ..."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(synthetic_covers(n, seed, height, width, channels)):
        p = d / f"cover_{i:04d}.png"
        save_image(img, p)
        paths.append(p)
    return paths
