"""k-bit least-significant-bit substitution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CapacityExceeded
from ..media.image import Image
from ..media.payload import HEADER_BITS, as_bits, frame, unframe


@dataclass(frozen=True)
class LsbParams:
    """Bits per carrier byte. Carrier bytes are visited row-major, R then G then B."""

    k: int = 1

    def __post_init__(self):
        if not 1 <= self.k <= 4:
            raise ValueError(f"LSB depth k must be in 1..4, got {self.k}")


def lsb_capacity(image: Image, params: LsbParams) -> int:
    """Total carrier bits, header included."""
    return image.pixels.size * params.k


def lsb_payload_capacity(image: Image, params: LsbParams) -> int:
    return max(0, lsb_capacity(image, params) - HEADER_BITS)


def _low_bits(flat: np.ndarray, k: int) -> np.ndarray:
    # (n,) uint8 -> (n*k,) bits, most significant of each k-group first
    shifts = np.arange(k - 1, -1, -1, dtype=np.uint8)
    return ((flat[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def lsb_embed(cover: Image, payload, params: LsbParams = LsbParams()) -> Image:
    bits = as_bits(payload)
    k = params.k
    capacity = lsb_capacity(cover, params)
    stream = frame(bits, HEADER_BITS + bits.size)
    if stream.size > capacity:
        raise CapacityExceeded(int(stream.size), capacity)
    flat = cover.pixels.reshape(-1).copy()
    n_bytes = -(-stream.size // k)
    # a trailing partial group keeps the carrier's own remaining bits
    groups = _low_bits(flat[:n_bytes], k)
    groups[: stream.size] = stream
    weights = (1 << np.arange(k - 1, -1, -1)).astype(np.uint16)
    values = (groups.reshape(n_bytes, k) * weights).sum(axis=1).astype(np.uint8)
    mask = np.uint8((0xFF << k) & 0xFF)
    flat[:n_bytes] = (flat[:n_bytes] & mask) | values
    return Image(flat.reshape(cover.shape))


def lsb_extract(stego: Image, params: LsbParams = LsbParams()) -> np.ndarray:
    return unframe(_low_bits(stego.pixels.reshape(-1), params.k))
