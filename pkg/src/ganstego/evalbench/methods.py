"""Uniform embed/extract interface over the LSB, DCT and GAN embedders."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..baselines import (
    DctParams, LsbParams, dct_embed, dct_extract, dct_payload_capacity, lsb_embed, lsb_extract,
    lsb_payload_capacity,
)
from ..media.image import Image
from ..media.payload import BitPayload

KINDS = ("lsb", "dct", "gan")


@dataclass(frozen=True)
class MethodSpec:
    """Method selector plus parameters, written as ``lsb:k=4``, ``dct:delta=8`` or ``gan:checkpoint=path``."""

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown method {self.kind!r}; expected one of {', '.join(KINDS)}")
        object.__setattr__(self, "params", tuple(sorted(self.params)))
        p = dict(self.params)
        allowed = {"lsb": {"k"}, "dct": {"delta"}, "gan": {"checkpoint"}}[self.kind]
        extra = set(p) - allowed
        if extra:
            raise ValueError(f"{self.kind}: unknown parameter(s) {', '.join(sorted(extra))}")
        if self.kind == "gan" and "checkpoint" not in p:
            raise ValueError("gan method requires a checkpoint parameter")

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        kind, _, rest = text.partition(":")
        params = []
        for item in filter(None, rest.split(",")):
            key, sep, val = item.partition("=")
            if not sep:
                raise ValueError(f"method parameter {item!r} is not key=value")
            params.append((key.strip(), val.strip()))
        return cls(kind.strip(), tuple(params))

    @property
    def label(self) -> str:
        p = dict(self.params)
        if self.kind == "lsb":
            return f"lsb-k{int(p.get('k', 1))}"
        if self.kind == "dct":
            return f"dct-d{float(p.get('delta', 8.0)):g}"
        return "gan"

    def __str__(self) -> str:
        if not self.params:
            return self.kind
        return self.kind + ":" + ",".join(f"{k}={v}" for k, v in self.params)


class Embedder:
    """Bound method: capacity in payload bits, embed(cover, bits), extract(stego)."""

    def __init__(self, spec: MethodSpec):
        self.spec = spec
        p = dict(spec.params)
        self._model = None
        if spec.kind == "lsb":
            self.lsb = LsbParams(int(p.get("k", 1)))
        elif spec.kind == "dct":
            self.dct = DctParams(delta=float(p.get("delta", 8.0)))
        else:
            from ..trainer import StegoModel

            self._model = StegoModel(p["checkpoint"])

    def capacity(self, cover: Image) -> int:
        if self.spec.kind == "lsb":
            return lsb_payload_capacity(cover, self.lsb)
        if self.spec.kind == "dct":
            return dct_payload_capacity(cover, self.dct)
        return max(0, self._model.capacity(cover) - 32)

    def embed(self, cover: Image, bits: np.ndarray, seed: int = 0) -> Image:
        if self.spec.kind == "lsb":
            return lsb_embed(cover, bits, self.lsb)
        if self.spec.kind == "dct":
            return dct_embed(cover, bits, self.dct)
        return self._model.embed(cover, BitPayload(bits), seed)

    def extract(self, stego: Image) -> np.ndarray:
        if self.spec.kind == "lsb":
            return lsb_extract(stego, self.lsb)
        if self.spec.kind == "dct":
            return dct_extract(stego, self.dct)
        return self._model.extract(stego).bits

    def extract_known_length(self, stego: Image, n_bits: int) -> np.ndarray:
        """Payload bits when the sender's length is known.

        The GAN channel is noisy, so its header is skipped and the raw bits
        after it are returned; a flipped header bit would otherwise discard
        the whole payload and hide the actual bit error rate.
        """
        if self.spec.kind == "gan":
            return self._model.extract_bits(stego)[32 : 32 + n_bits]
        return self.extract(stego)
