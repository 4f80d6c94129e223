"""Point-cloud files: binary ``PCL1`` and plain-text XYZ."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .metrics import as_cloud

MAGIC = b"PCL1"


def dumps_pcl(pc) -> bytes:
    pts = as_cloud(pc).astype("<f4")
    return MAGIC + struct.pack("<I", len(pts)) + pts.tobytes()


def loads_pcl(data: bytes) -> np.ndarray:
    if data[:4] != MAGIC:
        raise ValueError(f"not a PCL1 file (magic {data[:4]!r})")
    (n,) = struct.unpack_from("<I", data, 4)
    if len(data) != 8 + 12 * n:
        raise ValueError(f"PCL1 file size {len(data)} does not match {n} points")
    return np.frombuffer(data, dtype="<f4", offset=8).reshape(n, 3).astype(np.float64)


def write_pcl(pc, path) -> int:
    data = dumps_pcl(pc)
    Path(path).write_bytes(data)
    return len(data)


def read_pcl(path) -> np.ndarray:
    return loads_pcl(Path(path).read_bytes())


def write_xyz(pc, path) -> None:
    np.savetxt(path, as_cloud(pc), fmt="%.9g")


def read_xyz(path) -> np.ndarray:
    return as_cloud(np.loadtxt(path, ndmin=2))


def read_cloud(path) -> np.ndarray:
    """Dispatch on extension: ``.xyz``/``.txt`` as text, anything else as PCL1."""
    if Path(path).suffix.lower() in (".xyz", ".txt"):
        return read_xyz(path)
    return read_pcl(path)


def write_cloud(pc, path) -> None:
    if Path(path).suffix.lower() in (".xyz", ".txt"):
        write_xyz(pc, path)
    else:
        write_pcl(pc, path)


def raw_size(n_points: int) -> int:
    """Bytes of an uncompressed cloud stored as float32 triples."""
    return 12 * n_points
