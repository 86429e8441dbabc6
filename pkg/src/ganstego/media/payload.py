"""Secret payloads: bit sequences, length framing, and secret planes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CapacityExceeded, MalformedHeader
from .image import Image

HEADER_BITS = 32
MODES = ("bitstream", "image")


def as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if arr.size and arr.max() > 1:
        raise ValueError("bit sequence contains values other than 0 and 1")
    return arr


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_bytes(bits) -> bytes:
    bits = as_bits(bits)
    if bits.size % 8:
        raise ValueError(f"bit count {bits.size} is not a whole number of bytes")
    return np.packbits(bits).tobytes()


def bits_to_image(bits, shape: tuple[int, int, int]) -> Image:
    """Rebuild an image from its MSB-first pixel serialization."""
    data = bits_to_bytes(bits)
    return Image(np.frombuffer(data, dtype=np.uint8).reshape(shape).copy())


@dataclass(frozen=True, eq=False)
class BitPayload:
    bits: np.ndarray
    mode: str = "bitstream"
    source: Image | None = None
    bpp: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown payload mode {self.mode!r}")
        if (self.mode == "image") != (self.source is not None):
            raise ValueError("a source image is required exactly when mode is 'image'")
        object.__setattr__(self, "bits", as_bits(self.bits))

    def __len__(self) -> int:
        return int(self.bits.size)

    @classmethod
    def from_bytes(cls, data: bytes, bpp: int = 1) -> "BitPayload":
        return cls(bytes_to_bits(data), "bitstream", None, bpp)

    @classmethod
    def from_image(cls, image: Image, bpp: int = 1) -> "BitPayload":
        return cls(bytes_to_bits(image.to_bytes()), "image", image, bpp)

    @classmethod
    def random(cls, rng: np.random.Generator, n_bits: int, bpp: int = 1) -> "BitPayload":
        return cls(rng.integers(0, 2, size=n_bits, dtype=np.uint8), "bitstream", None, bpp)

    def to_bytes(self) -> bytes:
        return bits_to_bytes(self.bits)

    def fits(self, capacity: int) -> bool:
        return len(self) <= capacity


def frame(bits, capacity: int) -> np.ndarray:
    """Prefix ``bits`` with a 32-bit big-endian length and zero-pad to ``capacity``."""
    bits = as_bits(bits)
    needed = HEADER_BITS + bits.size
    if needed > capacity:
        raise CapacityExceeded(needed, capacity)
    if bits.size >= 2**HEADER_BITS:
        raise CapacityExceeded(needed, 2**HEADER_BITS - 1)
    header = np.unpackbits(np.frombuffer(int(bits.size).to_bytes(4, "big"), dtype=np.uint8))
    out = np.zeros(capacity, dtype=np.uint8)
    out[:HEADER_BITS] = header
    out[HEADER_BITS:needed] = bits
    return out


def unframe(stream) -> np.ndarray:
    """Read the length header and return that many payload bits."""
    stream = as_bits(stream)
    if stream.size < HEADER_BITS:
        raise MalformedHeader(f"carrier holds {stream.size} bits, fewer than the {HEADER_BITS}-bit header")
    length = int.from_bytes(np.packbits(stream[:HEADER_BITS]).tobytes(), "big")
    available = stream.size - HEADER_BITS
    if length > available:
        raise MalformedHeader(f"header declares {length} payload bits but only {available} fit the carrier")
    return stream[HEADER_BITS : HEADER_BITS + length].copy()


def bits_to_plane(payload, height: int, width: int, bpp: int = 1, dtype=np.float32) -> np.ndarray:
    """Pack bits plane-major then row-major into a [bpp, H, W] array of +/-1.

    Bit 1 maps to +1 and bit 0 to -1; positions past the payload are 0 bits.
    """
    bits = payload.bits if isinstance(payload, BitPayload) else as_bits(payload)
    available = height * width * bpp
    if bits.size > available:
        raise CapacityExceeded(int(bits.size), available)
    flat = np.zeros(available, dtype=np.uint8)
    flat[: bits.size] = bits
    return (flat.astype(dtype) * 2 - 1).reshape(bpp, height, width)


def plane_to_bits(plane, n_bits: int | None = None) -> np.ndarray:
    """Decode a plane (or extractor logits) with the rule bit = 1 iff value > 0."""
    arr = np.asarray(getattr(plane, "data", plane)).reshape(-1)
    bits = (arr > 0).astype(np.uint8)
    return bits if n_bits is None else bits[:n_bits]


def bit_error_rate(sent, received) -> float:
    a, b = as_bits(sent), as_bits(received)
    if a.size != b.size:
        raise ValueError(f"bit sequences differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        return 0.0
    return float(np.count_nonzero(a != b)) / a.size
