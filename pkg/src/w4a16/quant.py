"""Uniform affine INT4 quantization and nibble packing.

Codes are unsigned nibbles in ``[0, 15]``. Symmetric quantization uses a
zero-point of 8, so a signed code ``q`` in ``[-8, 7]`` is stored as ``q + 8``.
Eight codes share one little-endian 32-bit word; code ``i`` of a word sits in
bits ``[4i, 4i + 4)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, ShapeError
from .numerics import Fp16Matrix, f16_from_f32, widen

CODES_PER_WORD = 8
SYMMETRIC_ZERO_POINT = 8
QMAX = 7
SCALE_FLOOR = 1e-8

PER_TENSOR = "per-tensor"
PER_CHANNEL = "per-channel"
MODES = (PER_TENSOR, PER_CHANNEL)


@dataclass(frozen=True, eq=False)
class PackedInt4Matrix:
    """K x N nibble matrix stored as a ``(K, N // 8)`` uint32 array."""

    rows: int
    cols: int
    words: np.ndarray

    def __post_init__(self):
        if self.cols % CODES_PER_WORD:
            raise ShapeError(f"column count {self.cols} is not a multiple of 8")
        words = np.ascontiguousarray(self.words, dtype=np.uint32)
        if words.shape != (self.rows, self.cols // CODES_PER_WORD):
            raise ShapeError(
                f"word array has shape {words.shape}, expected "
                f"({self.rows}, {self.cols // CODES_PER_WORD})"
            )
        object.__setattr__(self, "words", words)

    @classmethod
    def from_codes(cls, codes) -> "PackedInt4Matrix":
        codes = np.asarray(codes)
        if codes.ndim != 2:
            raise ShapeError("code matrix must be 2-d")
        rows, cols = codes.shape
        return cls(rows, cols, pack(codes.reshape(-1)).reshape(rows, -1))

    def codes(self) -> np.ndarray:
        return unpack(self.words.reshape(-1)).reshape(self.rows, self.cols)

    def __eq__(self, other):
        if not isinstance(other, PackedInt4Matrix):
            return NotImplemented
        return (self.rows, self.cols) == (other.rows, other.cols) and np.array_equal(
            self.words, other.words
        )


@dataclass(frozen=True, eq=False)
class QuantParams:
    mode: str
    scales: np.ndarray
    zero_points: np.ndarray

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown quantization mode {self.mode!r}")
        scales = np.ascontiguousarray(self.scales, dtype=np.float32).reshape(-1)
        zps = np.asarray(self.zero_points)
        if zps.size and (zps.min() < 0 or zps.max() > 15):
            raise DomainError("zero-points must lie in [0, 15]")
        zps = np.ascontiguousarray(zps, dtype=np.uint8).reshape(-1)
        if scales.shape != zps.shape:
            raise ShapeError("scales and zero-points differ in length")
        if self.mode == PER_TENSOR and scales.size != 1:
            raise ShapeError("per-tensor parameters need exactly one scale")
        if not (np.all(np.isfinite(scales)) and np.all(scales > 0)):
            raise DomainError("scales must be finite and positive")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "zero_points", zps)

    def column_scales(self, cols: int) -> np.ndarray:
        if self.mode == PER_TENSOR:
            return np.full(cols, self.scales[0], np.float32)
        if self.scales.size != cols:
            raise ShapeError(f"{self.scales.size} per-channel scales for {cols} columns")
        return self.scales

    def column_zero_points(self, cols: int) -> np.ndarray:
        if self.mode == PER_TENSOR:
            return np.full(cols, self.zero_points[0], np.uint8)
        return self.zero_points

    def __eq__(self, other):
        if not isinstance(other, QuantParams):
            return NotImplemented
        return (
            self.mode == other.mode
            and np.array_equal(self.scales.view(np.uint32), other.scales.view(np.uint32))
            and np.array_equal(self.zero_points, other.zero_points)
        )


def quantize(x: float, s: float, z: int) -> int:
    """``round_half_even(x / s) + z`` clamped to a nibble; division in binary32."""
    if not math.isfinite(x) or not math.isfinite(s) or s <= 0:
        raise DomainError(f"quantize needs finite x and s > 0, got x={x}, s={s}")
    q = int(np.rint(np.float32(x) / np.float32(s))) + int(z)
    return min(max(q, 0), 15)


def dequantize(code: int, s: float, z: int) -> int:
    """binary16 code of ``s * (code - z)``; the product is rounded to binary32 first."""
    return f16_from_f32(float(np.float32(s) * np.float32(int(code) - int(z))))


def pack(codes) -> np.ndarray:
    codes = np.asarray(codes).reshape(-1)
    if codes.size % CODES_PER_WORD:
        raise ShapeError(f"cannot pack {codes.size} codes: not a multiple of 8")
    if codes.size and (codes.min() < 0 or codes.max() > 15):
        raise DomainError("codes must lie in [0, 15]")
    nib = codes.reshape(-1, CODES_PER_WORD)
    words = np.zeros(nib.shape[0], np.uint32)
    for i in range(CODES_PER_WORD):
        words |= nib[:, i].astype(np.uint32) << np.uint32(4 * i)
    return words


def unpack(words) -> np.ndarray:
    words = np.asarray(words, dtype=np.uint32).reshape(-1)
    shifts = np.arange(8, dtype=np.uint32) * 4
    return ((words[:, None] >> shifts) & 0xF).astype(np.uint8).reshape(-1)


def _quantize_columns(w: np.ndarray, scales: np.ndarray, zps: np.ndarray) -> np.ndarray:
    q = np.rint(w / scales) + zps.astype(np.float32)
    return np.clip(q, 0, 15).astype(np.uint8)


def quantize_matrix(wf, mode: str = PER_CHANNEL) -> tuple[PackedInt4Matrix, QuantParams]:
    """Symmetric INT4 quantization of a K x N weight matrix.

    ``wf`` is an :class:`Fp16Matrix` or any float array. The scale of a column
    (or of the whole tensor) is ``max|w| / 7`` in binary32, floored at 1e-8 so
    all-zero columns quantize to the zero-point.
    """
    if isinstance(wf, Fp16Matrix):
        w = wf.to_float32()
    else:
        w = np.asarray(wf, dtype=np.float32)
    if w.ndim != 2 or w.shape[0] < 1:
        raise ShapeError(f"weight matrix must be 2-d with K >= 1, got shape {w.shape}")
    if w.shape[1] % CODES_PER_WORD:
        raise ShapeError(f"N={w.shape[1]} is not a multiple of 8")
    if not np.all(np.isfinite(w)):
        raise DomainError("weight matrix contains non-finite values")
    if mode not in MODES:
        raise DomainError(f"unknown quantization mode {mode!r}")

    absmax = np.abs(w).max(axis=0) if mode == PER_CHANNEL else np.abs(w).max(keepdims=True)
    scales = np.maximum(absmax.astype(np.float32) / np.float32(QMAX), np.float32(SCALE_FLOOR))
    zps = np.full(scales.shape, SYMMETRIC_ZERO_POINT, np.uint8)
    codes = _quantize_columns(w, scales, zps)
    return PackedInt4Matrix.from_codes(codes), QuantParams(mode, scales, zps)


def dequantize_tile(w: PackedInt4Matrix, params: QuantParams, rows, cols) -> Fp16Matrix:
    """Dequantize ``w[r0:r1, c0:c1]`` to binary16; ``c0`` and ``c1`` must be word-aligned."""
    r0, r1 = rows
    c0, c1 = cols
    if not (0 <= r0 <= r1 <= w.rows and 0 <= c0 <= c1 <= w.cols):
        raise ShapeError(f"tile rows {rows} cols {cols} outside a {w.rows}x{w.cols} matrix")
    if c0 % CODES_PER_WORD or c1 % CODES_PER_WORD:
        raise ShapeError(f"column range {cols} is not aligned to 8")
    if r1 == r0 or c1 == c0:
        return Fp16Matrix.zeros(r1 - r0, c1 - c0)
    block = w.words[r0:r1, c0 // CODES_PER_WORD : c1 // CODES_PER_WORD]
    scales = params.column_scales(w.cols)[c0:c1]
    zps = params.column_zero_points(w.cols)[c0:c1]
    return Fp16Matrix(kernels.dequant_block(block, scales, zps))


def dequantize_matrix(w: PackedInt4Matrix, params: QuantParams) -> Fp16Matrix:
    return dequantize_tile(w, params, (0, w.rows), (0, w.cols))


def max_abs_error(original, w: PackedInt4Matrix, params: QuantParams) -> float:
    """Largest ``|dequant(w) - original|`` over all elements."""
    if isinstance(original, Fp16Matrix):
        original = original.to_float32()
    deq = widen(dequantize_matrix(w, params).data).astype(np.float64)
    if deq.size == 0:
        return 0.0
    return float(np.max(np.abs(deq - np.asarray(original, dtype=np.float64))))
