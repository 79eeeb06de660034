"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is warmed up once (numba compiles on first call), then timed as
the best of ``--repeat`` runs. Outputs of both flavours are checked bit-equal.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from w4a16 import kernels
from w4a16.engine import SplitKPlan, splitk_w4a16_gemm
from w4a16.experiment import make_inputs
from w4a16.numerics import encode_array


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    x = rng.uniform(-70000, 70000, size=1 << 20).astype(np.float32)
    words = rng.integers(0, 1 << 32, size=(1024, 128), dtype=np.uint64).astype(np.uint32)
    scales = rng.uniform(0.01, 1, size=1024).astype(np.float32)
    zps = np.full(1024, 8, np.uint8)
    a = encode_array(rng.uniform(-1, 1, size=(128, 512)).astype(np.float32))
    b = encode_array(rng.uniform(-1, 1, size=(512, 128)).astype(np.float32))
    bufs = rng.standard_normal((8, 256, 1024)).astype(np.float32)

    def chain(be):
        acc = np.zeros((128, 128), np.float32)
        be.chain_accumulate(acc, a, b)
        return acc

    return {
        "encode_f16 (1M)": lambda be: be.encode_f16(x),
        "dequant_block (1024x1024)": lambda be: be.dequant_block(words, scales, zps),
        "chain_accumulate (128x512x128)": chain,
        "fold_splits (8x256x1024)": lambda be: be.fold_splits(bufs),
    }


def end_to_end(be, repeat):
    a, w, params = make_inputs(0, 1536, 6144, 8)
    plan = SplitKPlan(4)
    saved = {name: getattr(kernels, name) for name in ("encode_f16", "dequant_block", "chain_accumulate", "fold_splits")}
    try:
        for name in saved:
            setattr(kernels, name, getattr(be, name))
        return best_of(lambda: splitk_w4a16_gemm(a, w, params, plan), repeat)
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "numba" not in kernels.BACKENDS:
        raise SystemExit("numba is not installed; nothing to compare")
    nb, npy = kernels.BACKENDS["numba"], kernels.BACKENDS["numpy"]
    rng = np.random.default_rng(0)
    print(f"{'kernel':<34}{'numpy s':>10}{'numba s':>10}{'speedup':>9}  bit-equal")
    for name, fn in cases(rng).items():
        same = np.array_equal(np.asarray(fn(npy)).view(np.uint8), np.asarray(fn(nb)).view(np.uint8))
        t_np, t_nb = best_of(lambda: fn(npy), args.repeat), best_of(lambda: fn(nb), args.repeat)
        print(f"{name:<34}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x  {same}")
    t_np, t_nb = end_to_end(npy, max(1, args.repeat // 2)), end_to_end(nb, max(1, args.repeat // 2))
    print(f"{'splitk gemm 8x6144x1536, S=4':<34}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
