"""Brute-force reference arithmetic, independent of the package.

Rounding goes through ``struct``'s binary16 ('e') and binary32 ('f') packing,
which use the C library's round-to-nearest-even conversions. A binary32 sum
of two binary32 values computed in double and then rounded once is correctly
rounded (53 >= 2 * 24 + 2), so the chain emulation below matches true binary32
arithmetic bit for bit.
"""
import struct


def to_f32(x: float) -> float:
    return struct.unpack("<f", struct.pack("<f", x))[0]


def f16_code(x: float) -> int:
    try:
        return struct.unpack("<H", struct.pack("<e", x))[0]
    except OverflowError:
        return 0x7C00 if x > 0 else 0xFC00


def f16_value(code: int) -> float:
    return struct.unpack("<e", struct.pack("<H", code))[0]


def dequant_value(code: int, scale: float, zp: int) -> float:
    """binary16 value of ``scale * (code - zp)`` with a binary32 product."""
    return f16_value(f16_code(to_f32(scale * (code - zp))))


def dequant_matrix(codes, scales, zps):
    K, N = len(codes), len(codes[0])
    return [[dequant_value(int(codes[k][n]), float(scales[n]), int(zps[n])) for n in range(N)] for k in range(K)]


def matmul_exact(a, b):
    """Triple loop in double precision, rounded to binary32 then binary16."""
    M, K, N = len(a), len(b), len(b[0])
    out = []
    for i in range(M):
        row = []
        for j in range(N):
            s = 0.0
            for k in range(K):
                s += a[i][k] * b[k][j]
            row.append(f16_code(to_f32(s)))
        out.append(row)
    return out


def matmul_chain(a, b, k_splits=None):
    """binary32 chain per K slice, ascending left fold over slices, then binary16."""
    M, K, N = len(a), len(b), len(b[0])
    k_splits = k_splits or [(0, K)]
    out = []
    for i in range(M):
        row = []
        for j in range(N):
            total = None
            for k0, k1 in k_splits:
                acc = 0.0
                for k in range(k0, k1):
                    acc = to_f32(acc + a[i][k] * b[k][j])
                total = acc if total is None else to_f32(total + acc)
            row.append(f16_code(total))
        out.append(row)
    return out
