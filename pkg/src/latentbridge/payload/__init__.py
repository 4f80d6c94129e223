from .container import (
    HEADER_SIZE,
    BadMagic,
    BadVersion,
    CRCMismatch,
    FingerprintWarning,
    PayloadError,
    PayloadMeta,
    compression_ratio,
    decode_payload,
    encode_payload,
    latent_bytes,
    read_payload,
    write_payload,
)
from .quant import dequantize, quantize
from .rangecoder import RangeCoderError, range_decode, range_encode

__all__ = [
    "HEADER_SIZE",
    "BadMagic",
    "BadVersion",
    "CRCMismatch",
    "FingerprintWarning",
    "PayloadError",
    "PayloadMeta",
    "RangeCoderError",
    "compression_ratio",
    "decode_payload",
    "dequantize",
    "encode_payload",
    "latent_bytes",
    "quantize",
    "range_decode",
    "range_encode",
    "read_payload",
    "write_payload",
]
