"""8-bit raster images and the [-1, 1] tensor view used by the networks."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff import Tensor
from ..errors import ExtentError, UnsupportedFormat
from ..fsutil import atomic_write
from .png import decode_png, encode_png


@dataclass(frozen=True, eq=False)
class Image:
    """Row-major uint8 pixels of shape (height, width, channels), sRGB assumed."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise UnsupportedFormat(f"image must have 1 or 3 channels, got shape {px.shape}")
        if px.dtype != np.uint8:
            raise UnsupportedFormat(f"image pixels must be uint8, got {px.dtype}")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape

    def __eq__(self, other) -> bool:
        return isinstance(other, Image) and self.shape == other.shape and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.shape, self.pixels.tobytes()))

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes()


def load_image(path) -> Image:
    data = Path(path).read_bytes()
    return Image(decode_png(data))


def save_image(image: Image, path) -> None:
    atomic_write(path, encode_png(image.pixels))


def normalize(image: Image, dtype=np.float32) -> Tensor:
    """Map pixels to a [C, H, W] tensor via v = p / 127.5 - 1."""
    chw = image.pixels.transpose(2, 0, 1).astype(np.float64)
    return Tensor((chw / 127.5 - 1.0).astype(dtype))


def denormalize(t) -> Image:
    """Inverse of :func:`normalize`: clamp to [-1, 1], rescale, round half away from zero."""
    arr = np.asarray(t.data if isinstance(t, Tensor) else t, dtype=np.float64)
    if arr.ndim != 3:
        raise ExtentError(f"expected a [C, H, W] tensor, got shape {arr.shape}")
    v = (np.clip(arr, -1.0, 1.0) + 1.0) * 127.5
    # values are non-negative, so floor(v + 0.5) rounds half away from zero
    px = np.floor(v + 0.5).clip(0, 255).astype(np.uint8)
    return Image(px.transpose(1, 2, 0))


def center_crop(image: Image, height: int, width: int) -> Image:
    if image.height < height or image.width < width:
        raise ExtentError(f"cannot crop {image.height}x{image.width} image to {height}x{width}")
    top = (image.height - height) // 2
    left = (image.width - width) // 2
    return Image(image.pixels[top : top + height, left : left + width])
