from .image import Image, center_crop, denormalize, load_image, normalize, save_image
from .payload import (
    HEADER_BITS, BitPayload, bit_error_rate, bits_to_bytes, bits_to_image, bits_to_plane,
    bytes_to_bits, frame, plane_to_bits, unframe,
)
from .png import decode_png, encode_png
