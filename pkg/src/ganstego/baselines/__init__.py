from .dct import (
    DctParams, dct8_forward, dct8_inverse, dct_capacity, dct_embed, dct_extract,
    dct_payload_capacity, dct_read_stream, qim_decode, qim_embed, zigzag_order,
)
from .lsb import LsbParams, lsb_capacity, lsb_embed, lsb_extract, lsb_payload_capacity
