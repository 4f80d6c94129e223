"""Per-vector affine quantization to 8- or 16-bit codes."""

from __future__ import annotations

import numpy as np

SUPPORTED_BITS = (8, 16)
_F32_MAX = float(np.finfo(np.float32).max)


def _f32_down(x: float) -> float:
    y = np.float32(x)
    if float(y) > x:
        y = np.nextafter(y, np.float32(-np.inf))
    return float(y)


def _f32_up(x: float) -> float:
    y = np.float32(x)
    if float(y) < x:
        y = np.nextafter(y, np.float32(np.inf))
    return float(y)


def code_dtype(bits: int):
    return np.dtype("<u1") if bits == 8 else np.dtype("<u2")


def quantize(z, bits: int = 16):
    """Map ``z`` onto ``[0, 2**bits - 1]`` over its own [min, max] range.

    ``scale`` and ``offset`` come back float32-representable (that is what
    the container stores), with offset rounded down and scale rounded up so
    every component stays inside the code range. A constant vector gives
    ``scale == 0``, all-zero codes and ``offset`` equal to the constant.
    """
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"bits must be one of {SUPPORTED_BITS}, got {bits}")
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.size == 0 or not np.all(np.isfinite(z)):
        raise ValueError("quantize needs a non-empty finite vector")
    if np.abs(z).max() > _F32_MAX / 2:
        raise ValueError("values exceed the float32 range of the container")
    lo, hi = float(z.min()), float(z.max())
    dtype = code_dtype(bits)
    if lo == hi:
        return np.zeros(z.size, dtype=dtype), 0.0, lo
    levels = 2**bits - 1
    offset = _f32_down(lo)
    scale = _f32_up((hi - offset) / levels)
    codes = np.clip(np.rint((z - offset) / scale), 0, levels).astype(dtype)
    return codes, scale, offset


def dequantize(codes, scale: float, offset: float) -> np.ndarray:
    return offset + scale * np.asarray(codes, dtype=np.float64)
