"""The ``SQZ3`` payload container.

Layout (little-endian)::

    offset  size  field
         0     4  magic b"SQZ3"
         4     2  version (u16, 1)
         6     4  d_C (u32)
        10     1  quant_bits (8 or 16)
        11     1  entropy flag (0 raw, 1 range-coded)
        12     4  scale (f32)
        16     4  offset (f32)
        20     8  codec fingerprint
        28     8  bridge fingerprint
        36     .  body: raw codes (d_C * bits / 8 bytes), or u32 length + range-coded bytes
         .     4  CRC32 of everything before it
"""

from __future__ import annotations

import struct
import warnings
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .quant import code_dtype, dequantize, quantize
from .rangecoder import range_decode, range_encode

MAGIC = b"SQZ3"
VERSION = 1
HEADER = struct.Struct("<4sHIBBff8s8s")
HEADER_SIZE = HEADER.size
CRC_SIZE = 4


class PayloadError(ValueError):
    pass


class BadMagic(PayloadError):
    pass


class BadVersion(PayloadError):
    pass


class CRCMismatch(PayloadError):
    pass


class FingerprintWarning(UserWarning):
    pass


@dataclass
class PayloadMeta:
    d_c: int
    quant_bits: int
    entropy_coded: bool
    scale: float
    offset: float
    codec_fingerprint: bytes
    bridge_fingerprint: bytes
    body_bytes: int
    total_bytes: int


def _fp(value) -> bytes:
    fp = bytes(value) if value is not None else bytes(8)
    if len(fp) != 8:
        raise ValueError("fingerprints are 8 bytes")
    return fp


def encode_payload(z_comp, bits: int = 16, entropy: bool = True, codec_fingerprint=None, bridge_fingerprint=None) -> bytes:
    """Serialize a code vector. With ``entropy`` set the smaller of raw and range-coded body is kept."""
    codes, scale, offset = quantize(z_comp, bits)
    raw = codes.astype(code_dtype(bits)).tobytes()
    body, coded = raw, False
    if entropy:
        packed = range_encode(codes, bits)
        if len(packed) + 4 < len(raw):
            body, coded = struct.pack("<I", len(packed)) + packed, True
    header = HEADER.pack(
        MAGIC, VERSION, codes.size, bits, int(coded), scale, offset, _fp(codec_fingerprint), _fp(bridge_fingerprint)
    )
    data = header + body
    return data + struct.pack("<I", zlib.crc32(data))


def decode_payload(data: bytes, expected_codec=None, expected_bridge=None):
    """Return ``(z_comp, meta)``; raises a :class:`PayloadError` subclass on damage."""
    data = bytes(data)
    if len(data) < HEADER_SIZE + CRC_SIZE:
        raise CRCMismatch(f"payload truncated to {len(data)} bytes")
    magic, version, d_c, bits, flag, scale, offset, codec_fp, bridge_fp = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad payload magic {magic!r}")
    if version != VERSION:
        raise BadVersion(f"unsupported payload version {version}")
    (crc,) = struct.unpack_from("<I", data, len(data) - CRC_SIZE)
    if zlib.crc32(data[:-CRC_SIZE]) != crc:
        raise CRCMismatch("payload CRC mismatch (corrupt or truncated)")
    if bits not in (8, 16) or flag not in (0, 1):
        raise PayloadError(f"invalid header fields bits={bits} flag={flag}")
    body = data[HEADER_SIZE:-CRC_SIZE]
    if flag:
        (n_packed,) = struct.unpack_from("<I", body, 0)
        if n_packed != len(body) - 4:
            raise PayloadError("range-coded body length disagrees with its prefix")
        codes = range_decode(body[4:], d_c, bits)
    else:
        if len(body) != d_c * bits // 8:
            raise PayloadError(f"raw body is {len(body)} bytes, header implies {d_c * bits // 8}")
        codes = np.frombuffer(body, dtype=code_dtype(bits))
    if expected_codec is not None and bytes(expected_codec) != codec_fp:
        warnings.warn("payload was written with a different codec", FingerprintWarning, stacklevel=2)
    if expected_bridge is not None and bytes(expected_bridge) != bridge_fp:
        warnings.warn("payload was written with a different bridge", FingerprintWarning, stacklevel=2)
    meta = PayloadMeta(d_c, bits, bool(flag), float(scale), float(offset), codec_fp, bridge_fp, len(body), len(data))
    return dequantize(codes, meta.scale, meta.offset), meta


def write_payload(z_comp, path, bits: int = 16, entropy: bool = True, codec_fingerprint=None, bridge_fingerprint=None) -> int:
    data = encode_payload(z_comp, bits, entropy, codec_fingerprint, bridge_fingerprint)
    Path(path).write_bytes(data)
    return len(data)


def read_payload(path, expected_codec=None, expected_bridge=None):
    return decode_payload(Path(path).read_bytes(), expected_codec, expected_bridge)


def compression_ratio(original_bytes: int, payload_bytes: int) -> float:
    if payload_bytes <= 0 or original_bytes <= 0:
        raise ValueError("byte counts must be positive")
    return original_bytes / payload_bytes


def latent_bytes(d_c: int, bits: int) -> int:
    """Size of the quantized code itself, without container overhead."""
    return d_c * bits // 8
