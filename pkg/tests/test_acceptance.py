"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run standalone with ``python3 tests/test_acceptance.py`` or through pytest,
where the lines are repeated in the terminal summary.
"""
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from conftest import grid_instance  # noqa: E402
from oracle import dequant_matrix, matmul_exact  # noqa: E402
from w4a16 import formats  # noqa: E402
from w4a16.cli import main  # noqa: E402
from w4a16.engine import DATAPARALLEL, ENGINES, FP16, RESIDENT_REUSE, SPLITK, SplitKPlan, run_engine  # noqa: E402
from w4a16.experiment import BENCHMARK_SHAPES  # noqa: E402
from w4a16.machine import MachineConfig, best_split, model_cost, predicted_speedup, traffic_for, weight_path_ratio  # noqa: E402
from w4a16.numerics import Fp16Matrix  # noqa: E402
from w4a16.quant import (  # noqa: E402
    PER_CHANNEL,
    PER_TENSOR,
    PackedInt4Matrix,
    dequantize_matrix,
    pack,
    quantize_matrix,
    unpack,
)

RESULTS = []
TILES16 = dict(m=16, n=16, k=16)


def report(number, name, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number} {name}: {detail} ({elapsed:.2f} s, budget {budget:g} s)"
    RESULTS.append(line)
    print(line)
    return ok


def _oracle(a, codes, params):
    N = codes.shape[1]
    b = dequant_matrix(codes.tolist(), params.column_scales(N).tolist(), params.column_zero_points(N).tolist())
    return matmul_exact(a.to_float32().astype(float).tolist(), b)


def test_1_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches, runs, s4 = 0, 0, 0
    for _ in range(200):
        M, K, N = int(rng.integers(1, 65)), int(rng.integers(1, 65)), 8 * int(rng.integers(1, 9))
        a, w, params, codes = grid_instance(rng, M, K, N)
        expected = _oracle(a, codes, params)
        k_tiles = -(-K // 16)
        outputs = [run_engine(SPLITK, a, w, params, SplitKPlan(S, **TILES16))[0] for S in (1, 2, 4) if S <= k_tiles]
        s4 += k_tiles >= 4
        outputs.append(run_engine(DATAPARALLEL, a, w, params, SplitKPlan(**TILES16))[0])
        outputs.append(run_engine(FP16, a, w, params, SplitKPlan(**TILES16), b=dequantize_matrix(w, params))[0])
        for c in outputs:
            runs += 1
            mismatches += c.data.tolist() != expected
    ok = mismatches == 0
    detail = f"{runs} engine runs on 200 instances ({s4} with S=4 valid), {mismatches} differ from the exact oracle (0 ulp)"
    assert report(1, "oracle equivalence", ok, detail, time.perf_counter() - t0, 30)


def test_2_split_invariance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    exact_diffs = 0
    for _ in range(20):
        M, K, N = int(rng.integers(1, 33)), int(rng.integers(128, 385)), 8 * int(rng.integers(1, 9))
        a, w, params, _ = grid_instance(rng, M, K, N)
        outs = [run_engine(SPLITK, a, w, params, SplitKPlan(S, **TILES16))[0] for S in (1, 2, 4, 8)]
        exact_diffs += sum(o != outs[0] for o in outs[1:])
    worst_norm = worst_elem = 0.0
    for _ in range(20):
        M, K, N = int(rng.integers(1, 33)), int(rng.integers(128, 513)), 8 * int(rng.integers(1, 9))
        a = Fp16Matrix.from_float(rng.uniform(-1, 1, (M, K)).astype(np.float32))
        w, params = quantize_matrix(rng.uniform(-1, 1, (K, N)).astype(np.float32))
        outs = [run_engine(SPLITK, a, w, params, SplitKPlan(S, **TILES16))[0].to_float32().astype(np.float64) for S in (1, 2, 4, 8)]
        ref = outs[0]
        scale = np.abs(ref).max()
        for o in outs[1:]:
            d = np.abs(o - ref)
            worst_norm = max(worst_norm, d.max() / scale)
            nz = ref != 0
            worst_elem = max(worst_elem, (d[nz] / np.abs(ref[nz])).max(initial=0.0))
    ok = exact_diffs == 0 and worst_norm <= 2.0**-8
    detail = (
        f"exact inputs: {exact_diffs} differing outputs over S in {{1,2,4,8}}; "
        f"random inputs: max |dC|/max|C| = {worst_norm:.3e} <= 2^-8 "
        f"(elementwise relative, informational: {worst_elem:.3e})"
    )
    assert report(2, "S-invariance", ok, detail, time.perf_counter() - t0, 30)


def test_3_round_trips(tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    failures = []
    for code in range(16):
        for slot in range(8):
            codes = rng.integers(0, 16, size=8 * int(rng.integers(1, 6)))
            codes[slot] = code
            if unpack(pack(codes)).tolist() != codes.tolist():
                failures.append(f"pack code={code} slot={slot}")
    for i, mode in enumerate([PER_CHANNEL, PER_TENSOR] * 3):
        K, N = int(rng.integers(1, 40)), 8 * int(rng.integers(1, 6))
        w, params = quantize_matrix(rng.standard_normal((K, N)).astype(np.float32), mode)
        path = tmp_path / f"w{i}.w4"
        formats.write_packed(path, w, params)
        w2, params2 = formats.read_packed(path)
        if not (w2 == w and params2 == params and formats.packed_to_bytes(w2, params2) == path.read_bytes()):
            failures.append(f"file {mode} {K}x{N}")
        scales = np.ldexp(1.0, rng.integers(-6, 3, size=N)) if mode == PER_CHANNEL else np.full(N, 0.25)
        q = rng.integers(-7, 8, size=(K, N))
        q[0] = 7
        wf = Fp16Matrix.from_float((q * scales).astype(np.float32))
        packed, qp = quantize_matrix(wf, mode)
        if dequantize_matrix(packed, qp) != wf:
            failures.append(f"grid {mode} {K}x{N}")
    detail = f"{len(failures)} failures over 128 packing layouts, 6 file round trips, 6 grid matrices"
    assert report(3, "round trips and packing", not failures, detail, time.perf_counter() - t0, 5)


def test_4_trace_matches_closed_form():
    t0 = time.perf_counter()
    rng = np.random.default_rng(44)
    bad = []
    for i in range(50):
        M, N, K = int(rng.integers(1, 70)), 8 * int(rng.integers(1, 17)), int(rng.integers(1, 400))
        m, n, k = (16 * int(rng.integers(1, 5)) for _ in range(3))
        k_tiles = -(-K // k)
        S = int(rng.integers(1, min(8, k_tiles) + 1))
        reuse = RESIDENT_REUSE if i % 2 else "unit"
        a = Fp16Matrix.from_float(rng.uniform(-1, 1, (M, K)).astype(np.float32))
        w = PackedInt4Matrix.from_codes(rng.integers(0, 16, (K, N), dtype=np.uint8))
        params = quantize_matrix(rng.uniform(-1, 1, (1, N)).astype(np.float32))[1]
        b = dequantize_matrix(w, params)
        for engine in ENGINES:
            plan = SplitKPlan(S if engine == SPLITK else 1, m, n, k, int(rng.integers(1, 25)), 2, reuse)
            _, trace = run_engine(engine, a, w, params, plan, b=b)
            if trace.totals() != traffic_for(engine, M, N, K, plan).as_dict():
                bad.append((engine, M, N, K, plan))
    detail = f"{150 - len(bad)}/150 engine traces (50 shapes x 3 engines) equal the closed forms exactly"
    assert report(4, "traffic-model consistency", not bad, detail, time.perf_counter() - t0, 10)


def test_5_round_trip_bottleneck():
    t0 = time.perf_counter()
    plan = SplitKPlan()
    ratios = [weight_path_ratio(1, N, K, plan) for N, K in BENCHMARK_SHAPES]
    worst = 0.0
    for bw in (0.25e12, 1e12, 4e12):
        for overlap in (0.5, 1.0):
            cfg = MachineConfig(gm_bandwidth=bw, overlap_efficiency=overlap)
            for N, K in BENCHMARK_SHAPES:
                for M in (1, 8, 16, 32):
                    worst = max(worst, predicted_speedup(N, K, M, cfg=cfg)["w4a16_vs_fp16"])
    ok = all(r == 2.25 for r in ratios) and worst < 4.0
    detail = f"weight-path ratios {sorted(set(ratios))} (want exactly 2.25); max modelled w4a16_vs_fp16 {worst:.3f} < 4"
    assert report(5, "round-trip bottleneck", ok, detail, time.perf_counter() - t0, 10)


def test_6_splitk_trend():
    t0 = time.perf_counter()
    cfg = MachineConfig()
    plan = cfg.plan()
    rows, violations = [], []
    for N, K in BENCHMARK_SHAPES:
        if K < 3 * N:
            continue
        for M in (1, 8, 16, 32):
            S = best_split(M, N, K, cfg, plan)
            t_sk = model_cost(SPLITK, M, N, K, cfg, dataclasses.replace(plan, splits=S)).total
            t_dp = model_cost(DATAPARALLEL, M, N, K, cfg, plan).total
            rows.append(t_dp / t_sk)
            if t_sk > t_dp:
                violations.append((N, K, M, S))
    detail = f"{len(rows)} (shape, M) points with K >= 3N; splitk/dp speedup range {min(rows):.3f}-{max(rows):.3f}; {len(violations)} slower"
    assert report(6, "Split-K trend", not violations and rows, detail, time.perf_counter() - t0, 10)


def test_7_sweep_determinism(tmp_path):
    t0 = time.perf_counter()
    argv = ["sweep", "--shape", "256,1024", "--shape", "512,2048", "--m", "1,8,17", "--split", "1,2,auto", "--seed", "5"]
    outs = []
    for run, workers in enumerate((1, 1, 3)):
        path = tmp_path / f"run{run}.csv"
        assert main([*argv, "--workers", str(workers), "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    ok = outs[0] == outs[1] == outs[2] and len(outs[0].splitlines()) > 1
    detail = f"{len(outs[0].splitlines()) - 1} rows; two runs with 1 worker and one with 3 workers byte-identical: {ok}"
    assert report(7, "determinism", ok, detail, time.perf_counter() - t0, 60)


if __name__ == "__main__":
    import tempfile

    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    failed = 0
    for fn in tests:
        with tempfile.TemporaryDirectory() as tmp:
            try:
                fn(Path(tmp)) if fn.__code__.co_argcount else fn()
            except AssertionError:
                failed += 1
    print(f"{len(tests) - failed}/{len(tests)} criteria passed")
    sys.exit(1 if failed else 0)
