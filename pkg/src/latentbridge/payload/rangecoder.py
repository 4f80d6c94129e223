"""Order-0 adaptive range coder over byte symbols.

32-bit low/range with carry propagation through a cached byte (the scheme
used by LZMA's range encoder), driven by adaptive frequency counts kept in a
Fenwick tree. 16-bit codes are split into a high and a low byte, each with
its own model.
"""

from __future__ import annotations

import numpy as np

TOP = 1 << 24
MASK32 = 0xFFFFFFFF
ALPHABET = 256
INCREMENT = 24
MAX_TOTAL = 1 << 16


class RangeCoderError(ValueError):
    pass


class AdaptiveModel:
    """Symbol counts starting at 1, bumped by INCREMENT, halved when the total gets large."""

    def __init__(self, n: int = ALPHABET):
        self.n = n
        self.freq = [1] * n
        self.total = n
        self._build()

    def _build(self):
        tree = [0] * (self.n + 1)
        for i, f in enumerate(self.freq, start=1):
            tree[i] += f
            j = i + (i & -i)
            if j <= self.n:
                tree[j] += tree[i]
        self.tree = tree
        self.top_bit = 1 << (self.n.bit_length() - 1)

    def cum(self, sym: int) -> int:
        """Sum of counts of symbols < sym."""
        s, i = 0, sym
        while i > 0:
            s += self.tree[i]
            i -= i & -i
        return s

    def find(self, target: int) -> int:
        """Symbol whose cumulative interval contains ``target``."""
        pos, step = 0, self.top_bit
        while step:
            nxt = pos + step
            if nxt <= self.n and self.tree[nxt] <= target:
                pos = nxt
                target -= self.tree[nxt]
            step >>= 1
        return pos

    def update(self, sym: int) -> None:
        self.freq[sym] += INCREMENT
        self.total += INCREMENT
        if self.total > MAX_TOTAL:
            self.freq = [(f + 1) // 2 for f in self.freq]
            self.total = sum(self.freq)
            self._build()
            return
        i = sym + 1
        while i <= self.n:
            self.tree[i] += INCREMENT
            i += i & -i


class _Encoder:
    def __init__(self):
        self.low = 0
        self.range = MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()

    def _shift_low(self):
        if self.low < 0xFF000000 or self.low > MASK32:
            carry = self.low >> 32
            temp = self.cache
            while True:
                self.out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (self.low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (self.low << 8) & MASK32

    def encode(self, model: AdaptiveModel, sym: int):
        r = self.range // model.total
        self.low += model.cum(sym) * r
        self.range = model.freq[sym] * r
        while self.range < TOP:
            self.range <<= 8
            self._shift_low()
        model.update(sym)

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self.out)


class _Decoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.range = MASK32
        self.code = 0
        for _ in range(5):
            self.code = (self.code << 8) | self._next()

    def _next(self) -> int:
        if self.pos >= len(self.data):
            raise RangeCoderError(f"range-coded stream ended early at byte {self.pos}")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def decode(self, model: AdaptiveModel) -> int:
        r = self.range // model.total
        value = self.code // r
        if value >= model.total:
            raise RangeCoderError(f"corrupt range-coded stream near byte {self.pos}")
        sym = model.find(value)
        self.code -= model.cum(sym) * r
        self.range = model.freq[sym] * r
        while self.range < TOP:
            self.code = ((self.code << 8) | self._next()) & MASK32
            self.range <<= 8
        model.update(sym)
        return sym


def _planes(bits: int) -> int:
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    return bits // 8


def range_encode(codes, bits: int = 8) -> bytes:
    """Losslessly compress integer codes in ``[0, 2**bits)``."""
    planes = _planes(bits)
    codes = np.asarray(codes).ravel()
    if codes.size and (codes.min() < 0 or codes.max() >= 1 << bits):
        raise ValueError(f"codes out of range for {bits} bits")
    models = [AdaptiveModel() for _ in range(planes)]
    enc = _Encoder()
    for c in codes.tolist():
        for p in range(planes - 1, -1, -1):
            enc.encode(models[p], (c >> (8 * p)) & 0xFF)
    return enc.finish()


def range_decode(data: bytes, n: int, bits: int = 8) -> np.ndarray:
    """Inverse of :func:`range_encode` for ``n`` codes."""
    planes = _planes(bits)
    models = [AdaptiveModel() for _ in range(planes)]
    dec = _Decoder(bytes(data))
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        c = 0
        for p in range(planes - 1, -1, -1):
            c |= dec.decode(models[p]) << (8 * p)
        out[i] = c
    return out
