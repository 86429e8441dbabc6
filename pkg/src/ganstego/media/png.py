"""Minimal PNG reader/writer for 8-bit grayscale and RGB, non-interlaced."""
from __future__ import annotations

import struct
import zlib

import numpy as np

from ..errors import UnsupportedFormat

SIGNATURE = b"\x89PNG\r\n\x1a\n"
_COLOR_CHANNELS = {0: 1, 2: 3}
_COLOR_NAMES = {0: "grayscale", 2: "RGB", 3: "palette", 4: "grayscale+alpha", 6: "RGBA"}


def _chunks(data: bytes):
    pos = len(SIGNATURE)
    while pos + 8 <= len(data):
        length, ctype = struct.unpack(">I4s", data[pos : pos + 8])
        body = data[pos + 8 : pos + 8 + length]
        if len(body) != length:
            raise UnsupportedFormat("truncated chunk")
        crc = struct.unpack(">I", data[pos + 8 + length : pos + 12 + length])[0]
        if zlib.crc32(ctype + body) != crc:
            raise UnsupportedFormat(f"CRC mismatch in {ctype.decode('latin-1')} chunk")
        yield ctype, body
        pos += 12 + length


def _paeth_row(line: np.ndarray, prev: np.ndarray, bpp: int) -> np.ndarray:
    out = line.astype(np.int32)
    up = prev.astype(np.int32)
    for i in range(len(out)):
        a = out[i - bpp] if i >= bpp else 0
        b = up[i]
        c = up[i - bpp] if i >= bpp else 0
        p = a + b - c
        pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
        pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
        out[i] = (out[i] + pred) & 0xFF
    return out.astype(np.uint8)


def _unfilter(raw: bytes, height: int, stride: int, bpp: int) -> np.ndarray:
    if len(raw) < height * (stride + 1):
        raise UnsupportedFormat("image data shorter than declared extents")
    rows = np.frombuffer(raw, dtype=np.uint8)[: height * (stride + 1)].reshape(height, stride + 1)
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    for y in range(height):
        ftype, line = rows[y, 0], rows[y, 1:]
        if ftype == 0:
            cur = line.copy()
        elif ftype == 1:
            cur = (line.reshape(-1, bpp).astype(np.uint32).cumsum(axis=0) & 0xFF).astype(np.uint8).reshape(-1)
        elif ftype == 2:
            cur = line + prev
        elif ftype == 3:
            cur = line.astype(np.int32)
            up = prev.astype(np.int32)
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                cur[i] = (cur[i] + ((left + up[i]) >> 1)) & 0xFF
            cur = cur.astype(np.uint8)
        elif ftype == 4:
            cur = _paeth_row(line, prev, bpp)
        else:
            raise UnsupportedFormat(f"unknown scanline filter type {ftype}")
        out[y] = cur
        prev = cur
    return out


def decode_png(data: bytes) -> np.ndarray:
    """Decode PNG bytes to a uint8 array of shape (H, W, C), C in {1, 3}."""
    if not data.startswith(SIGNATURE):
        raise UnsupportedFormat("not a PNG file (bad signature)")
    header = None
    idat = []
    for ctype, body in _chunks(data):
        if ctype == b"IHDR":
            header = struct.unpack(">IIBBBBB", body)
        elif ctype == b"IDAT":
            idat.append(body)
        elif ctype == b"IEND":
            break
    if header is None:
        raise UnsupportedFormat("missing IHDR chunk")
    width, height, depth, color, compression, filt, interlace = header
    if depth != 8:
        raise UnsupportedFormat(f"unsupported bit depth {depth} (only 8-bit is supported)")
    if color not in _COLOR_CHANNELS:
        name = _COLOR_NAMES.get(color, str(color))
        raise UnsupportedFormat(f"unsupported color type {color} ({name}); need grayscale or RGB")
    if interlace != 0:
        raise UnsupportedFormat("unsupported interlacing (Adam7); only non-interlaced PNG is supported")
    if compression != 0 or filt != 0:
        raise UnsupportedFormat(f"unsupported compression/filter method {compression}/{filt}")
    channels = _COLOR_CHANNELS[color]
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise UnsupportedFormat(f"corrupt image data: {exc}") from None
    pixels = _unfilter(raw, height, width * channels, channels)
    return pixels.reshape(height, width, channels)


def _chunk(ctype: bytes, body: bytes) -> bytes:
    return struct.pack(">I", len(body)) + ctype + body + struct.pack(">I", zlib.crc32(ctype + body))


def encode_png(pixels: np.ndarray) -> bytes:
    """Encode a uint8 (H, W, C) array; rows are stored unfiltered."""
    if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[2] not in (1, 3):
        raise UnsupportedFormat(f"cannot encode array of shape {pixels.shape} and dtype {pixels.dtype}")
    h, w, c = pixels.shape
    color = 0 if c == 1 else 2
    rows = np.zeros((h, w * c + 1), dtype=np.uint8)
    rows[:, 1:] = pixels.reshape(h, w * c)
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color, 0, 0, 0)
    return SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", zlib.compress(rows.tobytes(), 6)) + _chunk(b"IEND", b"")
