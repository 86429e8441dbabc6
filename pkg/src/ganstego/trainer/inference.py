"""Embedding and extraction with a trained checkpoint."""
from __future__ import annotations

import numpy as np

from ..errors import ExtentError
from ..gan import ModelBundle
from ..media.image import Image, denormalize, normalize
from ..media.payload import BitPayload, frame, plane_to_bits, unframe
from .checkpoint import Checkpoint
from .loop import load_models


def _as_checkpoint(ckpt) -> Checkpoint:
    return ckpt if isinstance(ckpt, Checkpoint) else Checkpoint.load(ckpt)


class StegoModel:
    """Generator and extractor rebuilt from a checkpoint, in inference mode."""

    def __init__(self, ckpt):
        ckpt = _as_checkpoint(ckpt)
        self.config = ckpt.config
        self.models = ModelBundle.build(ckpt.config.model_config(), ckpt.config.seed)
        load_models(self.models, ckpt)
        self.models.eval()

    @property
    def bpp(self) -> int:
        return self.config.bpp

    def _check(self, image: Image) -> None:
        m = self.models.generator.multiple
        if image.height % m or image.width % m:
            raise ExtentError(f"image extents {image.height}x{image.width} must be multiples of {m}")
        if image.channels != self.config.channels:
            raise ExtentError(f"model expects {self.config.channels} channels, image has {image.channels}")

    def capacity(self, image: Image) -> int:
        return image.height * image.width * self.bpp

    def embed_bits(self, cover: Image, stream: np.ndarray) -> Image:
        """Hide a full-capacity bit stream (no framing)."""
        self._check(cover)
        h, w = cover.height, cover.width
        if stream.size != self.capacity(cover):
            raise ValueError(f"stream has {stream.size} bits, carrier takes exactly {self.capacity(cover)}")
        plane = (stream.astype(np.float32) * 2 - 1).reshape(self.bpp, h, w)
        out = self.models.generator(normalize(cover), plane)
        return denormalize(out)

    def extract_bits(self, stego: Image) -> np.ndarray:
        self._check(stego)
        return plane_to_bits(self.models.extractor(normalize(stego)))

    def embed(self, cover: Image, payload: BitPayload, seed: int = 0) -> Image:
        """Frame the payload with its length header; unused positions get seeded random bits."""
        stream = frame(payload.bits, self.capacity(cover))
        used = 32 + len(payload)
        rng = np.random.default_rng(seed)
        stream[used:] = rng.integers(0, 2, size=stream.size - used, dtype=np.uint8)
        return self.embed_bits(cover, stream)

    def extract(self, stego: Image) -> BitPayload:
        return BitPayload(unframe(self.extract_bits(stego)))


def embed_with_model(checkpoint, cover: Image, payload: BitPayload, seed: int = 0) -> Image:
    return StegoModel(checkpoint).embed(cover, payload, seed)


def extract_with_model(checkpoint, stego: Image) -> BitPayload:
    return StegoModel(checkpoint).extract(stego)
