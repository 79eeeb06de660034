"""Software binary16 conversion and the binary32 multiply-accumulate lane.

binary16 values are carried around as their raw 16-bit codes (``int`` or
``np.uint16``). Conversion to and from binary32 is done with integer bit
manipulation so results never depend on a platform's native half type.
binary32 arithmetic uses IEEE float32 (round-to-nearest-even), which numpy
and numba both guarantee when fastmath is off.
"""
from __future__ import annotations

import struct

import numpy as np

F16_ONE = 0x3C00
F16_POS_INF = 0x7C00
F16_NEG_INF = 0xFC00
F16_QNAN = 0x7E00
F16_MAX = 65504.0


def f32_bits(x: float) -> int:
    """Raw bits of ``x`` after rounding it to binary32."""
    return struct.unpack("<I", struct.pack("<f", x))[0]


def f32_from_bits(u: int) -> float:
    return struct.unpack("<f", struct.pack("<I", u & 0xFFFFFFFF))[0]


def encode_bits(u):
    """binary32 bit pattern -> binary16 code, round-to-nearest-even.

    Written with plain integer operations so the same source is also compiled
    by numba for the array kernels. NaN maps to the canonical quiet NaN
    (sign preserved); anything at or beyond 65520 saturates to infinity.
    """
    sign = (u >> 16) & 0x8000
    a = u & 0x7FFFFFFF
    if a > 0x7F800000:
        return sign | 0x7E00
    if a >= 0x477FF000:
        return sign | 0x7C00
    if a >= 0x38800000:
        # normal range: rebias exponent 127 -> 15 and keep the top 10 mantissa bits
        h = (a >> 13) - 0x1C000
        rem = a & 0x1FFF
        if rem > 0x1000 or (rem == 0x1000 and (h & 1) == 1):
            h += 1
        return sign | h
    e = a >> 23
    if e < 101:
        return sign
    sig = (a & 0x7FFFFF) | 0x800000
    shift = 126 - e
    q = sig >> shift
    rem = sig & ((1 << shift) - 1)
    half = 1 << (shift - 1)
    if rem > half or (rem == half and (q & 1) == 1):
        q += 1
    return sign | q


def decode_bits(h: int) -> int:
    """binary16 code -> binary32 bit pattern (exact)."""
    h &= 0xFFFF
    sign = (h & 0x8000) << 16
    exp = (h >> 10) & 0x1F
    mant = h & 0x3FF
    if exp == 0x1F:
        return sign | 0x7F800000 | (mant << 13)
    if exp == 0:
        if mant == 0:
            return sign
        # subnormal: normalise the mantissa
        e = 113
        while (mant & 0x400) == 0:
            mant <<= 1
            e -= 1
        return sign | (e << 23) | ((mant & 0x3FF) << 13)
    return sign | ((exp + 112) << 23) | (mant << 13)


def f16_from_f32(x: float) -> int:
    """Nearest binary16 code to ``x`` (first rounded to binary32)."""
    return encode_bits(f32_bits(x))


def f16_to_f32(h: int) -> float:
    """Exact binary32 value of a binary16 code."""
    return f32_from_bits(decode_bits(h))


def fma_acc(acc, a: int, b: int) -> np.float32:
    """One lane of the cube unit: ``acc + widen(a) * widen(b)`` in binary32.

    The product of two widened binary16 values needs at most 22 significand
    bits, so it is exact in binary32 and only the addition rounds.
    """
    prod = np.float32(f16_to_f32(a)) * np.float32(f16_to_f32(b))
    return np.float32(np.float32(acc) + prod)


def encode_array(x) -> np.ndarray:
    """Vectorised :func:`encode_bits` over a float32 array (pure numpy)."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    u = x.view(np.uint32).astype(np.int64)
    sign = (u >> 16) & 0x8000
    a = u & 0x7FFFFFFF

    h = (a >> 13) - 0x1C000
    rem = a & 0x1FFF
    h += (rem > 0x1000) | ((rem == 0x1000) & ((h & 1) == 1))

    # shift is capped at 40; sig < 2**24 then always rounds to zero
    e = a >> 23
    shift = np.clip(126 - e, 1, 40)
    sig = (a & 0x7FFFFF) | 0x800000
    q = sig >> shift
    rem = sig & ((np.int64(1) << shift) - 1)
    half = np.int64(1) << (shift - 1)
    q += (rem > half) | ((rem == half) & ((q & 1) == 1))

    out = np.where(a >= 0x38800000, h, q)
    out = np.where(a >= 0x477FF000, 0x7C00, out)
    out = np.where(a > 0x7F800000, 0x7E00, out)
    return (sign | out).astype(np.uint16)


def decode_array(codes) -> np.ndarray:
    """Vectorised binary16 code -> float32 (pure numpy, exact)."""
    h = np.asarray(codes, dtype=np.uint16).astype(np.uint32)
    sign = (h & 0x8000) << 16
    exp = (h >> 10) & 0x1F
    mant = h & 0x3FF
    bits = np.where(
        exp == 0x1F,
        np.uint32(0x7F800000) | (mant << 13),
        ((exp + 112) << 23) | (mant << 13),
    ).astype(np.uint32)
    sub = (mant.astype(np.float32) * np.float32(2.0**-24)).view(np.uint32)
    bits = np.where(exp == 0, sub, bits).astype(np.uint32)
    return (bits | sign).view(np.float32)


# widening lookup table shared by every kernel
F16_TO_F32_TABLE = decode_array(np.arange(1 << 16, dtype=np.uint32).astype(np.uint16))
F16_TO_F32_TABLE.setflags(write=False)


def widen(codes) -> np.ndarray:
    return F16_TO_F32_TABLE[np.asarray(codes, dtype=np.uint16)]


class Fp16Matrix:
    """Row-major matrix of binary16 codes."""

    __slots__ = ("data",)

    def __init__(self, data):
        data = np.asarray(data, dtype=np.uint16)
        if data.ndim != 2:
            raise ValueError(f"Fp16Matrix needs a 2-d array, got shape {data.shape}")
        self.data = data

    @classmethod
    def from_float(cls, values) -> "Fp16Matrix":
        return cls(encode_array(np.asarray(values, dtype=np.float32)))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Fp16Matrix":
        return cls(np.zeros((rows, cols), np.uint16))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def to_float32(self) -> np.ndarray:
        return widen(self.data)

    def __eq__(self, other):
        if not isinstance(other, Fp16Matrix):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"Fp16Matrix({self.rows}x{self.cols})"
