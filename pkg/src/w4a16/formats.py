"""Binary file formats (all little-endian).

Packed weights::

    offset  size  field
    0       6     magic  b"W4A16\\0"
    6       2     version (u16, currently 1)
    8       4     K (u32)
    12      4     N (u32)
    16      1     mode (u8: 0 per-tensor, 1 per-channel)
    17      7     reserved, zero
    24      4*G   scales (f32), G = 1 or N
    ..      G     zero-points (u8)
    ..      4*K*N/8  words (u32, row-major)

Matrix of binary16 codes::

    0       5     magic  b"F16M\\0"
    5       4     rows (u32)
    9       4     cols (u32)
    13      2*R*C codes (u16, row-major)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, W4A16Error
from .numerics import Fp16Matrix
from .quant import PER_CHANNEL, PER_TENSOR, PackedInt4Matrix, QuantParams

PACKED_MAGIC = b"W4A16\0"
PACKED_VERSION = 1
_PACKED_HEADER = struct.Struct("<6sHIIB7x")
_MODE_CODES = {PER_TENSOR: 0, PER_CHANNEL: 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}

MATRIX_MAGIC = b"F16M\0"
_MATRIX_HEADER = struct.Struct("<5sII")


def packed_to_bytes(w: PackedInt4Matrix, params: QuantParams) -> bytes:
    header = _PACKED_HEADER.pack(PACKED_MAGIC, PACKED_VERSION, w.rows, w.cols, _MODE_CODES[params.mode])
    return b"".join(
        [
            header,
            params.scales.astype("<f4").tobytes(),
            params.zero_points.astype(np.uint8).tobytes(),
            w.words.astype("<u4").tobytes(),
        ]
    )


def _take(buf: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(buf):
        raise FormatError(f"truncated {what}: need {size} bytes, {len(buf) - offset} left", offset)
    return buf[offset : offset + size]


def packed_from_bytes(buf: bytes) -> tuple[PackedInt4Matrix, QuantParams]:
    head = _take(buf, 0, _PACKED_HEADER.size, "header")
    magic, version, k, n, mode = _PACKED_HEADER.unpack(head)
    if magic != PACKED_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != PACKED_VERSION:
        raise FormatError(f"unsupported version {version}", 6)
    if mode not in _MODE_NAMES:
        raise FormatError(f"unknown mode byte {mode}", 16)
    if n % 8:
        raise FormatError(f"N={n} is not a multiple of 8", 12)
    off = _PACKED_HEADER.size
    groups = 1 if mode == 0 else n
    scales = np.frombuffer(_take(buf, off, 4 * groups, "scales"), "<f4").astype(np.float32)
    off += 4 * groups
    zps = np.frombuffer(_take(buf, off, groups, "zero-points"), np.uint8).copy()
    off += groups
    nwords = k * (n // 8)
    words = np.frombuffer(_take(buf, off, 4 * nwords, "words"), "<u4").astype(np.uint32)
    off += 4 * nwords
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes", off)
    try:
        params = QuantParams(_MODE_NAMES[mode], scales, zps)
    except W4A16Error as exc:
        raise FormatError(f"invalid quantization parameters: {exc}", _PACKED_HEADER.size) from exc
    return PackedInt4Matrix(k, n, words.reshape(k, n // 8)), params


def matrix_to_bytes(m: Fp16Matrix) -> bytes:
    return _MATRIX_HEADER.pack(MATRIX_MAGIC, m.rows, m.cols) + m.data.astype("<u2").tobytes()


def matrix_from_bytes(buf: bytes) -> Fp16Matrix:
    magic, rows, cols = _MATRIX_HEADER.unpack(_take(buf, 0, _MATRIX_HEADER.size, "header"))
    if magic != MATRIX_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    off = _MATRIX_HEADER.size
    body = _take(buf, off, 2 * rows * cols, "matrix data")
    if off + len(body) != len(buf):
        raise FormatError(f"{len(buf) - off - len(body)} trailing bytes", off + len(body))
    return Fp16Matrix(np.frombuffer(body, "<u2").astype(np.uint16).reshape(rows, cols))


def write_packed(path, w: PackedInt4Matrix, params: QuantParams) -> None:
    Path(path).write_bytes(packed_to_bytes(w, params))


def read_packed(path) -> tuple[PackedInt4Matrix, QuantParams]:
    return packed_from_bytes(Path(path).read_bytes())


def write_matrix(path, m: Fp16Matrix) -> None:
    Path(path).write_bytes(matrix_to_bytes(m))


def read_matrix(path) -> Fp16Matrix:
    return matrix_from_bytes(Path(path).read_bytes())
