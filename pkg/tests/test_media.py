import io
import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image as PILImage

from ganstego.errors import CapacityExceeded, MalformedHeader, UnsupportedFormat
from ganstego.media import (
    BitPayload, Image, bit_error_rate, bits_to_bytes, bits_to_image, bits_to_plane, bytes_to_bits,
    decode_png, denormalize, encode_png, frame, load_image, normalize, plane_to_bits, save_image, unframe,
)


def pil_png(arr, **kw):
    mode = "L" if arr.shape[2] == 1 else "RGB"
    buf = io.BytesIO()
    PILImage.fromarray(arr[:, :, 0] if mode == "L" else arr, mode).save(buf, "PNG", **kw)
    return buf.getvalue()


@pytest.mark.parametrize("channels", [1, 3])
@pytest.mark.parametrize("level", [0, 9])
def test_decode_matches_pillow_encoder(rng, channels, level):
    # Pillow picks adaptive scanline filters, exercising all five filter types
    arr = rng.integers(0, 256, size=(37, 23, channels), dtype=np.uint8)
    arr[10:20] = arr[10]  # repeated rows favour Up filtering
    np.testing.assert_array_equal(decode_png(pil_png(arr, compress_level=level)), arr)


def test_encoded_png_reads_in_pillow(rng):
    arr = rng.integers(0, 256, size=(9, 14, 3), dtype=np.uint8)
    got = np.asarray(PILImage.open(io.BytesIO(encode_png(arr))))
    np.testing.assert_array_equal(got, arr)


def test_encoding_is_deterministic(rng):
    arr = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    assert encode_png(arr) == encode_png(arr.copy())


def test_rejects_16_bit():
    buf = io.BytesIO()
    PILImage.fromarray(np.zeros((4, 4), np.uint16)).save(buf, "PNG")
    with pytest.raises(UnsupportedFormat, match="bit depth 16"):
        decode_png(buf.getvalue())


def test_rejects_palette():
    buf = io.BytesIO()
    PILImage.fromarray(np.zeros((4, 4, 3), np.uint8)).convert("P").save(buf, "PNG")
    with pytest.raises(UnsupportedFormat, match="color type 3"):
        decode_png(buf.getvalue())


def test_rejects_interlaced(rng):
    data = bytearray(encode_png(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)))
    # IHDR body starts at byte 16; the interlace flag is its last byte
    data[28] = 1
    data[29:33] = struct.pack(">I", zlib.crc32(bytes(data[12:29])))
    with pytest.raises(UnsupportedFormat, match="interlac"):
        decode_png(bytes(data))


def test_rejects_garbage_and_bad_crc(rng):
    with pytest.raises(UnsupportedFormat):
        decode_png(b"not a png at all")
    data = bytearray(encode_png(rng.integers(0, 256, (4, 4, 3), dtype=np.uint8)))
    data[20] ^= 0xFF  # inside IHDR body
    with pytest.raises(UnsupportedFormat, match="CRC"):
        decode_png(bytes(data))


def test_image_is_immutable(rng):
    img = Image(rng.integers(0, 256, (4, 4, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1


def test_image_rejects_bad_channels():
    with pytest.raises(UnsupportedFormat):
        Image(np.zeros((2, 2, 2), np.uint8))


def test_save_load_roundtrip(tmp_path, rng):
    img = Image(rng.integers(0, 256, (5, 6, 3), dtype=np.uint8))
    save_image(img, tmp_path / "a.png")
    assert load_image(tmp_path / "a.png") == img
    assert [p.name for p in tmp_path.iterdir()] == ["a.png"]


def test_normalize_endpoints():
    img = Image(np.array([[[0], [255]]], np.uint8))
    np.testing.assert_array_equal(normalize(img).data.reshape(-1), [-1.0, 1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_normalize_denormalize_identity(seed):
    arr = np.random.default_rng(seed).integers(0, 256, (3, 5, 3), dtype=np.uint8)
    assert denormalize(normalize(Image(arr))) == Image(arr)


def test_denormalize_clamps_and_rounds_half_up():
    t = np.array([[[-3.0, 3.0, (100.5 / 127.5) - 1]]])
    assert denormalize(t).pixels.reshape(-1).tolist() == [0, 255, 101]


def test_frame_header_is_big_endian_length():
    stream = frame([1, 0, 1], 40)
    assert stream[:32].tolist() == [0] * 30 + [1, 1]
    assert stream[32:35].tolist() == [1, 0, 1]
    assert stream[35:].tolist() == [0] * 5
    assert unframe(stream).tolist() == [1, 0, 1]


def test_frame_capacity_error_names_both_counts():
    with pytest.raises(CapacityExceeded) as info:
        frame(np.ones(10, np.uint8), 40)
    assert (info.value.needed, info.value.available) == (42, 40)
    assert "42" in str(info.value) and "40" in str(info.value)


def test_unframe_rejects_oversized_length():
    stream = frame(np.ones(4, np.uint8), 40)
    stream[0] = 1
    with pytest.raises(MalformedHeader):
        unframe(stream)
    with pytest.raises(MalformedHeader):
        unframe(np.zeros(10, np.uint8))


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=64))
def test_bytes_bits_roundtrip(data):
    assert bits_to_bytes(bytes_to_bits(data)) == data
    assert BitPayload.from_bytes(data).to_bytes() == data
    assert unframe(frame(bytes_to_bits(data), 32 + 8 * len(data) + 5)).tolist() == bytes_to_bits(data).tolist()


def test_bits_are_msb_first():
    assert bytes_to_bits(b"\x80\x01").tolist() == [1] + [0] * 7 + [0] * 7 + [1]


def test_image_payload_roundtrip(rng):
    img = Image(rng.integers(0, 256, (3, 4, 3), dtype=np.uint8))
    p = BitPayload.from_image(img)
    assert p.mode == "image" and len(p) == 3 * 4 * 3 * 8
    assert bits_to_image(p.bits, img.shape) == img


def test_plane_packing_and_decision_rule():
    plane = bits_to_plane(np.array([1, 0, 1], np.uint8), 2, 2, bpp=1)
    assert plane.shape == (1, 2, 2)
    assert plane.reshape(-1).tolist() == [1, -1, 1, -1]
    assert plane_to_bits(plane, 3).tolist() == [1, 0, 1]
    assert plane_to_bits(np.zeros(4)).tolist() == [0, 0, 0, 0]
    with pytest.raises(CapacityExceeded):
        bits_to_plane(np.ones(5, np.uint8), 2, 2)


def test_bit_error_rate():
    assert bit_error_rate([1, 0, 1, 1], [1, 1, 1, 0]) == 0.5
    assert bit_error_rate([], []) == 0.0
