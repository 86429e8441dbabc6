"""Deterministic cover pipeline: directory listing, epoch shuffles, random crops."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import StegoError
from ..media.image import Image, load_image


class DatasetError(StegoError):
    pass


def list_pngs(directory) -> list[Path]:
    """PNG files directly inside ``directory`` (not recursive), sorted by name."""
    d = Path(directory)
    if not d.is_dir():
        raise DatasetError(f"dataset directory not found: {d}")
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() == ".png")


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


class CoverDataset:
    """In-memory covers as normalized float32 [C, H, W] arrays.

    Batch ``t`` is a pure function of (seed, t): sample order walks through
    per-epoch permutations, and crop offsets and secrets come from a
    generator keyed by the step index. Resuming at any step therefore
    reproduces the same batches without replaying earlier draws.
    """

    def __init__(self, images: list[Image], crop: int, channels: int = 3, names=None):
        if not images:
            raise DatasetError("dataset is empty")
        self.crop = crop
        self.names = list(names) if names is not None else [str(i) for i in range(len(images))]
        arrays = []
        for name, img in zip(self.names, images):
            if img.channels != channels:
                raise DatasetError(f"{name}: has {img.channels} channels, expected {channels}")
            if img.height < crop or img.width < crop:
                raise DatasetError(f"{name}: {img.height}x{img.width} is smaller than crop {crop}")
            chw = img.pixels.transpose(2, 0, 1).astype(np.float32)
            arrays.append(chw / np.float32(127.5) - np.float32(1.0))
        self.arrays = arrays

    @classmethod
    def from_dir(cls, directory, crop: int, channels: int = 3) -> "CoverDataset":
        paths = list_pngs(directory)
        if not paths:
            raise DatasetError(f"no PNG files in {directory}")
        images = []
        for p in paths:
            try:
                images.append(load_image(p))
            except (OSError, StegoError, ValueError) as exc:
                raise DatasetError(f"{p.name}: {exc}") from exc
        return cls(images, crop, channels, [p.name for p in paths])

    def __len__(self) -> int:
        return len(self.arrays)

    def indices(self, seed: int, step: int, batch: int) -> np.ndarray:
        n = len(self)
        first = step * batch
        out = np.empty(batch, dtype=np.int64)
        cache: dict[int, np.ndarray] = {}
        for j in range(batch):
            epoch, pos = divmod(first + j, n)
            if epoch not in cache:
                cache[epoch] = _rng(seed, 1, epoch).permutation(n)
            out[j] = cache[epoch][pos]
        return out

    def batch(self, seed: int, step: int, batch: int, bpp: int) -> tuple[np.ndarray, np.ndarray]:
        """Covers [B, C, crop, crop] and secret bits [B, bpp, crop, crop] for one step."""
        rng = _rng(seed, 2, step)
        c = self.crop
        covers = []
        for idx in self.indices(seed, step, batch):
            a = self.arrays[idx]
            top = int(rng.integers(0, a.shape[1] - c + 1))
            left = int(rng.integers(0, a.shape[2] - c + 1))
            covers.append(a[:, top : top + c, left : left + c])
        bits = rng.integers(0, 2, size=(batch, bpp, c, c), dtype=np.uint8)
        return np.stack(covers), bits
