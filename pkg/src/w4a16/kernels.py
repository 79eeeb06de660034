"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names (``encode_f16``, ``dequant_block``, ``chain_accumulate``,
``fold_splits``) dispatch on :data:`w4a16._accel.USE_NUMBA`. The numpy flavour
keeps the exact same per-element operation order, so the two are
bit-identical; ``tests/test_kernels.py`` asserts it.
"""
from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from ._accel import HAS_NUMBA, USE_NUMBA, njit
from .numerics import F16_TO_F32_TABLE, encode_array, encode_bits

_NIBBLE_SHIFTS = np.arange(8, dtype=np.uint32) * 4


# ---------------------------------------------------------------- numpy path


def encode_f16_numpy(x):
    return encode_array(x)


def dequant_block_numpy(words, scales, zero_points):
    """Unpack and dequantize a ``(rows, cols/8)`` word block to f16 codes."""
    rows = words.shape[0]
    codes = ((words[:, :, None] >> _NIBBLE_SHIFTS) & 0xF).reshape(rows, -1)
    diff = codes.astype(np.int64) - zero_points.astype(np.int64)
    prod = scales.astype(np.float32) * diff.astype(np.float32)
    return encode_array(prod)


def chain_accumulate_numpy(acc, a_codes, b_codes):
    """``acc[i, j] += a[i, k] * b[k, j]`` for k ascending, binary32 throughout."""
    a = F16_TO_F32_TABLE[a_codes]
    b = F16_TO_F32_TABLE[b_codes]
    for k in range(a.shape[1]):
        acc += np.multiply.outer(a[:, k], b[k])


def fold_splits_numpy(buffers):
    out = buffers[0].copy()
    for s in range(1, buffers.shape[0]):
        out += buffers[s]
    return out


# ---------------------------------------------------------------- numba path

_encode_bits_nb = njit(encode_bits)


@njit
def _encode_into_nb(x, out):
    bits = x.view(np.uint32)
    for i in range(x.size):
        out[i] = _encode_bits_nb(np.int64(bits[i]))


@njit
def _dequant_into_nb(words, scales, zero_points, out):
    rows, nwords = words.shape
    tmp = np.empty(1, np.float32)
    tbits = tmp.view(np.uint32)
    for r in range(rows):
        for w in range(nwords):
            word = np.int64(words[r, w])
            for i in range(8):
                c = w * 8 + i
                code = (word >> (4 * i)) & 0xF
                tmp[0] = scales[c] * np.float32(code - np.int64(zero_points[c]))
                out[r, c] = _encode_bits_nb(np.int64(tbits[0]))


@njit
def _chain_nb(acc, a_codes, b_codes, table):
    mt, nt = acc.shape
    kt = a_codes.shape[1]
    brow = np.empty(nt, np.float32)
    for k in range(kt):
        for j in range(nt):
            brow[j] = table[b_codes[k, j]]
        for i in range(mt):
            av = table[a_codes[i, k]]
            for j in range(nt):
                acc[i, j] += av * brow[j]


@njit
def _fold_nb(buffers, out):
    nsplit, size = buffers.shape
    for e in range(size):
        v = buffers[0, e]
        for s in range(1, nsplit):
            v = v + buffers[s, e]
        out[e] = v


def encode_f16_numba(x):
    x = np.ascontiguousarray(x, dtype=np.float32)
    out = np.empty(x.shape, np.uint16)
    _encode_into_nb(x.reshape(-1), out.reshape(-1))
    return out


def dequant_block_numba(words, scales, zero_points):
    words = np.ascontiguousarray(words, dtype=np.uint32)
    out = np.empty((words.shape[0], words.shape[1] * 8), np.uint16)
    _dequant_into_nb(
        words,
        np.ascontiguousarray(scales, dtype=np.float32),
        np.ascontiguousarray(zero_points, dtype=np.uint8),
        out,
    )
    return out


def chain_accumulate_numba(acc, a_codes, b_codes):
    _chain_nb(acc, a_codes, b_codes, F16_TO_F32_TABLE)


def fold_splits_numba(buffers):
    buffers = np.ascontiguousarray(buffers, dtype=np.float32)
    out = np.empty(buffers.shape[1:], np.float32)
    _fold_nb(buffers.reshape(buffers.shape[0], -1), out.reshape(-1))
    return out


# ---------------------------------------------------------------- dispatch

NUMPY = SimpleNamespace(
    name="numpy",
    encode_f16=encode_f16_numpy,
    dequant_block=dequant_block_numpy,
    chain_accumulate=chain_accumulate_numpy,
    fold_splits=fold_splits_numpy,
)
NUMBA = SimpleNamespace(
    name="numba",
    encode_f16=encode_f16_numba,
    dequant_block=dequant_block_numba,
    chain_accumulate=chain_accumulate_numba,
    fold_splits=fold_splits_numba,
)
BACKENDS = {"numpy": NUMPY}
if HAS_NUMBA:
    BACKENDS["numba"] = NUMBA

ACTIVE = NUMBA if USE_NUMBA else NUMPY

encode_f16 = ACTIVE.encode_f16
dequant_block = ACTIVE.dequant_block
chain_accumulate = ACTIVE.chain_accumulate
fold_splits = ACTIVE.fold_splits
