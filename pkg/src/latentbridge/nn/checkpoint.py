"""Binary network checkpoints.

Layout (little-endian)::

    b"SQZN"  u16 version  u32 layer_count
    per layer: u8 kind  u32 in_dim  u32 out_dim  f32 dropout_rate  f32[] blob
    u32 crc32 of every preceding byte

The blob length is implied by kind and dims: linear stores W (in_dim x out_dim,
row-major) then b; layernorm stores gain then bias; residual-add stores its
source layer index as a single f32 (-1 for the network input); gelu and
dropout store nothing.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from pathlib import Path

import numpy as np

from .layers import LAYER_KINDS, LayerSpec, Network

MAGIC = b"SQZN"
VERSION = 1
_HEAD = struct.Struct("<4sHI")
_LAYER = struct.Struct("<BIIf")


class CheckpointError(ValueError):
    pass


def _blob_len(kind: str, in_dim: int, out_dim: int) -> int:
    if kind == "linear":
        return in_dim * out_dim + out_dim
    if kind == "layernorm":
        return 2 * out_dim
    if kind == "residual-add":
        return 1
    return 0


def dumps(net: Network) -> bytes:
    out = bytearray(_HEAD.pack(MAGIC, VERSION, len(net.specs)))
    for spec, ps in zip(net.specs, net.params):
        out += _LAYER.pack(LAYER_KINDS.index(spec.kind), spec.in_dim, spec.out_dim, spec.dropout_rate)
        if spec.kind == "residual-add":
            blob = np.array([spec.source], dtype="<f4")
        elif ps:
            blob = np.concatenate([p.ravel() for p in ps]).astype("<f4")
        else:
            blob = np.zeros(0, dtype="<f4")
        out += blob.tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def loads(data: bytes) -> Network:
    if len(data) < _HEAD.size + 4:
        raise CheckpointError("checkpoint truncated")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise CheckpointError("checkpoint CRC mismatch")
    magic, version, n_layers = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = _HEAD.size
    specs, params = [], []
    for _ in range(n_layers):
        kind_code, in_dim, out_dim, rate = _LAYER.unpack_from(data, pos)
        pos += _LAYER.size
        if kind_code >= len(LAYER_KINDS):
            raise CheckpointError(f"unknown layer kind code {kind_code}")
        kind = LAYER_KINDS[kind_code]
        n = _blob_len(kind, in_dim, out_dim)
        blob = np.frombuffer(data, dtype="<f4", count=n, offset=pos).astype(np.float64)
        pos += 4 * n
        source = None
        ps = []
        if kind == "residual-add":
            source = int(blob[0])
        elif kind == "linear":
            ps = [blob[: in_dim * out_dim].reshape(in_dim, out_dim), blob[in_dim * out_dim :]]
        elif kind == "layernorm":
            ps = [blob[:out_dim], blob[out_dim:]]
        # f32 round trip of the stored rate; snap back to a clean decimal
        rate = float(np.round(rate, 6)) if kind == "dropout" else 0.0
        specs.append(LayerSpec(kind, in_dim, out_dim, dropout_rate=rate, source=source))
        params.append(ps)
    if pos != len(data) - 4:
        raise CheckpointError("trailing bytes after last layer")
    return Network(specs, params)


def save(net: Network, path) -> int:
    data = dumps(net)
    Path(path).write_bytes(data)
    return len(data)


def load(path) -> Network:
    return loads(Path(path).read_bytes())


def fingerprint(*nets: Network) -> bytes:
    """8-byte content hash over the serialized parameters of ``nets``."""
    h = hashlib.sha256()
    for net in nets:
        h.update(dumps(net))
    return h.digest()[:8]
