"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"SGF1"  u16 version  32-byte config hash
    u32 len + UTF-8 config text
    u32 count, then per counter: u16 len + name, u64 value
    u32 count, then per blob:    u16 len + name, u8 ndim, u32 dims..., f32 data

Blob names are prefixed ``param/``, ``buffer/`` or ``adam/<net>/{m,v}/``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import StegoError
from ..fsutil import atomic_write
from .config import TrainConfig

MAGIC = b"SGF1"
VERSION = 1


class CheckpointError(StegoError):
    pass


class ConfigHashMismatch(CheckpointError):
    def __init__(self, expected: bytes, found: bytes):
        self.expected = expected
        self.found = found
        super().__init__(f"config hash mismatch: config {expected.hex()} vs checkpoint {found.hex()}")


@dataclass
class Checkpoint:
    config: TrainConfig
    step: int
    blobs: dict[str, np.ndarray] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)

    @property
    def config_hash(self) -> bytes:
        return self.config.hash()

    def to_bytes(self) -> bytes:
        out = [MAGIC, struct.pack("<H", VERSION), self.config_hash]
        text = self.config.to_text().encode()
        out.append(struct.pack("<I", len(text)) + text)
        counters = {"step": self.step, **self.counters}
        out.append(struct.pack("<I", len(counters)))
        for name, value in counters.items():
            out.append(_name(name) + struct.pack("<Q", value))
        out.append(struct.pack("<I", len(self.blobs)))
        for name, arr in self.blobs.items():
            a = np.ascontiguousarray(arr, dtype="<f4")
            out.append(_name(name) + struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
            out.append(a.tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        r = _Reader(data)
        if r.take(4) != MAGIC:
            raise CheckpointError("not a checkpoint: bad magic bytes")
        (version,) = r.unpack("<H")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        stored = r.take(32)
        (n,) = r.unpack("<I")
        try:
            config = TrainConfig.from_text(r.take(n).decode())
        except (UnicodeDecodeError, ValueError) as exc:
            raise CheckpointError(f"corrupt embedded config: {exc}") from exc
        if config.hash() != stored:
            raise CheckpointError("embedded config does not match the stored config hash")
        counters = {}
        (n,) = r.unpack("<I")
        for _ in range(n):
            name = r.name()
            (counters[name],) = r.unpack("<Q")
        blobs = {}
        (n,) = r.unpack("<I")
        for _ in range(n):
            name = r.name()
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}I")
            count = int(np.prod(shape, dtype=np.int64))
            blobs[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
        if r.pos != len(data):
            raise CheckpointError(f"{len(data) - r.pos} trailing bytes after checkpoint")
        step = counters.pop("step", None)
        if step is None:
            raise CheckpointError("checkpoint lacks a step counter")
        return cls(config, step, blobs, counters)

    def save(self, path) -> None:
        atomic_write(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


def _name(name: str) -> bytes:
    b = name.encode()
    return struct.pack("<H", len(b)) + b


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def name(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode()
