"""Mid-frequency 8x8 block-DCT embedding with quantization index modulation.

Each selected coefficient c carries one bit b by moving it to the nearest
point of the lattice 2*delta*Z + b*delta. Extraction picks the lattice whose
nearest point is closer, so any perturbation below delta/2 is tolerated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CapacityExceeded
from ..media.image import Image
from ..media.payload import HEADER_BITS, as_bits, frame, unframe

BLOCK = 8
MIN_DELTA = 4.0


def zigzag_order(n: int = BLOCK) -> list[tuple[int, int]]:
    """JPEG zig-zag scan of an n x n grid as (row, col) pairs."""
    cells = [(r, c) for r in range(n) for c in range(n)]
    return sorted(cells, key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]))


DEFAULT_COEFFS = tuple(zigzag_order()[9:17])


def _dct_matrix() -> np.ndarray:
    u = np.arange(BLOCK)[:, None]
    x = np.arange(BLOCK)[None, :]
    m = np.cos((2 * x + 1) * u * np.pi / (2 * BLOCK)) * np.sqrt(2.0 / BLOCK)
    m[0] /= np.sqrt(2.0)
    return m


_C = _dct_matrix()


def dct8_forward(block) -> np.ndarray:
    """Orthonormal type-II 2-D DCT of one block (or a stack of blocks)."""
    return _C @ np.asarray(block, dtype=np.float64) @ _C.T


def dct8_inverse(coeffs) -> np.ndarray:
    return _C.T @ np.asarray(coeffs, dtype=np.float64) @ _C


@dataclass(frozen=True)
class DctParams:
    delta: float = 8.0
    coefficients: tuple = field(default=DEFAULT_COEFFS)
    luma_only: bool = True

    def __post_init__(self):
        coeffs = tuple((int(u), int(v)) for u, v in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if not coeffs:
            raise ValueError("coefficient set is empty")
        if (0, 0) in coeffs:
            raise ValueError("the DC coefficient (0, 0) cannot carry payload")
        if any(not (0 <= u < BLOCK and 0 <= v < BLOCK) for u, v in coeffs):
            raise ValueError(f"coefficient indices must lie in the {BLOCK}x{BLOCK} grid")
        if len(set(coeffs)) != len(coeffs):
            raise ValueError("coefficient set has duplicates")
        if not self.delta >= MIN_DELTA:
            raise ValueError(f"quantization step must be >= {MIN_DELTA} so 8-bit rounding cannot flip bits, got {self.delta}")


def qim_embed(c, bits, delta: float) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    b = np.asarray(bits, dtype=np.float64)
    return 2 * delta * np.floor((c - b * delta) / (2 * delta) + 0.5) + b * delta


def qim_decode(c, delta: float) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    d0 = np.abs(c - qim_embed(c, 0, delta))
    d1 = np.abs(c - qim_embed(c, 1, delta))
    return (d1 < d0).astype(np.uint8)


# BT.601 full-range (JFIF) colour transform
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def _rgb_to_ycc(rgb: np.ndarray):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return y, cb, cr


def _ycc_to_rgb(y, cb, cr) -> np.ndarray:
    r = y + 1.402 * (cr - 128.0)
    g = y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0)
    b = y + 1.772 * (cb - 128.0)
    return np.stack([r, g, b], axis=-1)


def _planes(image: Image, luma_only: bool) -> list[np.ndarray]:
    px = image.pixels.astype(np.float64)
    if image.channels == 1:
        return [px[..., 0]]
    if luma_only:
        return [_rgb_to_ycc(px)[0]]
    return [px[..., c] for c in range(3)]


def _to_blocks(plane: np.ndarray) -> np.ndarray:
    h8, w8 = plane.shape[0] // BLOCK, plane.shape[1] // BLOCK
    crop = plane[: h8 * BLOCK, : w8 * BLOCK]
    return crop.reshape(h8, BLOCK, w8, BLOCK).transpose(0, 2, 1, 3)


def _from_blocks(blocks: np.ndarray, plane: np.ndarray) -> np.ndarray:
    h8, w8 = blocks.shape[:2]
    out = plane.copy()
    out[: h8 * BLOCK, : w8 * BLOCK] = blocks.transpose(0, 2, 1, 3).reshape(h8 * BLOCK, w8 * BLOCK)
    return out


def dct_capacity(image: Image, params: DctParams = DctParams()) -> int:
    """Total carrier bits (header included); partial edge blocks carry nothing."""
    n_planes = 1 if (image.channels == 1 or params.luma_only) else image.channels
    blocks = (image.height // BLOCK) * (image.width // BLOCK)
    return n_planes * blocks * len(params.coefficients)


def dct_payload_capacity(image: Image, params: DctParams = DctParams()) -> int:
    return max(0, dct_capacity(image, params) - HEADER_BITS)


def _read_coeffs(planes, params: DctParams) -> np.ndarray:
    rows = np.array([u for u, _ in params.coefficients])
    cols = np.array([v for _, v in params.coefficients])
    out = [dct8_forward(_to_blocks(p))[:, :, rows, cols].reshape(-1) for p in planes]
    return np.concatenate(out)


def _fit_luma(rgb: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] while keeping each pixel's luma at ``y`` where possible.

    Luma lost on a clamped channel is moved onto the pixel's channels that
    still have room, so only chroma absorbs the clamp. Three rounds suffice
    since each round saturates at least one more channel or clears the deficit.
    """
    out = np.clip(rgb, 0.0, 255.0)
    for _ in range(3):
        deficit = np.clip(y, 0.0, 255.0) - out @ LUMA_WEIGHTS
        room = np.where(deficit[..., None] > 0, out < 255.0, out > 0.0)
        share = (room * LUMA_WEIGHTS).sum(axis=-1)
        step = np.divide(deficit, share, out=np.zeros_like(deficit), where=share > 0)
        out = np.clip(out + room * step[..., None], 0.0, 255.0)
    return out


def _synthesize(cover: Image, planes: list[np.ndarray], params: DctParams) -> Image:
    px = cover.pixels.astype(np.float64)
    if cover.channels == 1:
        out = planes[0][..., None]
    elif params.luma_only:
        _, cb, cr = _rgb_to_ycc(px)
        out = _fit_luma(_ycc_to_rgb(planes[0], cb, cr), planes[0])
    else:
        out = np.stack(planes, axis=-1)
    return Image(np.floor(np.clip(out, 0, 255) + 0.5).astype(np.uint8))


def _shift_coeffs(planes, shift: np.ndarray, params: DctParams) -> list[np.ndarray]:
    """Add ``shift`` to the first ``shift.size`` carrier coefficients, in embedding order."""
    rows = np.array([u for u, _ in params.coefficients])
    cols = np.array([v for _, v in params.coefficients])
    out = []
    pos = 0
    for plane in planes:
        blocks = dct8_forward(_to_blocks(plane))
        sel = blocks[:, :, rows, cols].reshape(-1)
        take = min(sel.size, shift.size - pos)
        if take > 0:
            sel[:take] += shift[pos : pos + take]
            blocks[:, :, rows, cols] = sel.reshape(blocks.shape[0], blocks.shape[1], len(rows))
            pos += take
        out.append(_from_blocks(dct8_inverse(blocks), plane))
    return out


def _repair(stego: Image, stream: np.ndarray, params: DctParams, max_steps: int) -> Image:
    """Fix carrier bits that 8-bit rounding left on the wrong side, one pixel step at a time.

    A lone coefficient change spreads over 64 pixels in steps below one grey
    level, so rounding can snap the block back to the cover. Each step moves
    one sample by +/-1 where the failing coefficient's basis is largest with
    the needed sign, skipping steps that would flip another carrier bit of
    the same block.
    """
    px = stego.pixels.astype(np.int16)
    n_coef = len(params.coefficients)
    luma = stego.channels == 3 and params.luma_only
    n_planes = 1 if (stego.channels == 1 or params.luma_only) else stego.channels
    per_plane = (stego.height // BLOCK) * (stego.width // BLOCK)
    w8 = stego.width // BLOCK
    basis = np.stack([np.outer(_C[u], _C[v]) for u, v in params.coefficients])  # (n_coef, 8, 8)
    # order of channels to try for a luma step: largest weight first
    channel_order = np.argsort(-LUMA_WEIGHTS)
    for _ in range(max_steps):
        image = Image(px.astype(np.uint8))
        coeffs = _read_coeffs(_planes(image, params.luma_only), params)[: stream.size]
        bad = np.flatnonzero(qim_decode(coeffs, params.delta) != stream)
        if bad.size == 0:
            return image
        j = int(bad[0])
        plane, rest = divmod(j, per_plane * n_coef)
        blk, k = divmod(rest, n_coef)
        by, bx = divmod(blk, w8)
        need = np.sign(qim_embed(coeffs[j], stream[j], params.delta) - coeffs[j])
        lo = j - k
        hi = min(lo + n_coef, stream.size)
        block_coeffs = coeffs[lo:hi]
        block_bits = stream[lo:hi]
        rows = slice(by * BLOCK, (by + 1) * BLOCK)
        cols = slice(bx * BLOCK, (bx + 1) * BLOCK)
        best = None
        for flat in np.argsort(-(need * basis[k]).reshape(-1)):
            i, m = divmod(int(flat), BLOCK)
            if need * basis[k, i, m] <= 0:
                break
            channels = channel_order if luma else [plane if n_planes > 1 else 0]
            for c in channels:
                v = px[rows, cols][i, m, c] + int(need)
                if not 0 <= v <= 255:
                    continue
                gain = LUMA_WEIGHTS[c] if luma else 1.0
                moved = block_coeffs + need * gain * basis[: hi - lo, i, m]
                others = np.arange(hi - lo) != k
                if np.any(qim_decode(moved, params.delta)[others] != block_bits[others]):
                    continue
                best = (by * BLOCK + i, bx * BLOCK + m, c)
                break
            if best is not None:
                break
        if best is None:
            return image
        px[best] += int(need)
    return Image(px.astype(np.uint8))


def dct_embed(cover: Image, payload, params: DctParams = DctParams(), max_passes: int = 8,
              max_repair_steps: int = 4096) -> Image:
    """Embed framed ``payload`` bits; the result is clamped and rounded to 8 bits.

    Clamping at 0/255 and rounding can push a coefficient across a decision
    boundary, so embedding is repeated from the realized image until the
    payload reads back exactly or ``max_passes`` is reached. Bits still wrong
    after that are repaired in the pixel domain.
    """
    bits = as_bits(payload)
    capacity = dct_capacity(cover, params)
    stream = frame(bits, HEADER_BITS + bits.size)
    if stream.size > capacity:
        raise CapacityExceeded(int(stream.size), capacity)
    current = cover
    for _ in range(max_passes):
        planes = _planes(current, params.luma_only)
        realized = _read_coeffs(planes, params)[: stream.size]
        planes = _shift_coeffs(planes, qim_embed(realized, stream, params.delta) - realized, params)
        current = _synthesize(cover, planes, params)
        got = qim_decode(_read_coeffs(_planes(current, params.luma_only), params)[: stream.size], params.delta)
        if np.array_equal(got, stream):
            return current
    return _repair(current, stream, params, max_repair_steps)


def dct_extract(stego: Image, params: DctParams = DctParams()) -> np.ndarray:
    coeffs = _read_coeffs(_planes(stego, params.luma_only), params)
    return unframe(qim_decode(coeffs, params.delta))


def dct_read_stream(stego: Image, params: DctParams = DctParams()) -> np.ndarray:
    """Every carrier bit in embedding order, header included, without unframing."""
    return qim_decode(_read_coeffs(_planes(stego, params.luma_only), params), params.delta)
