"""Functional GEMM engines with execution traces.

Three engines share one arithmetic contract: every output element is a
binary32 chain ``acc += widen(a) * widen(b)`` over ``k`` ascending, rounded
once to binary16 at the end. They differ only in how the work is cut up:

* ``splitk_w4a16_gemm``  - dequantize to a global workspace (vector cores),
  per-K-slice partial products into binary32 split buffers (cube cores),
  ascending-index reduction plus cast (vector cores).
* ``dataparallel_w4a16_gemm`` - same dequant phase; each cube core owns whole
  output tiles and the full K reduction, no split buffers.
* ``fp16_gemm`` - data-parallel GEMM on an already-binary16 B.

Each engine first builds its schedule (a list of :class:`TraceEvent`) and then
executes exactly that schedule, so the trace is an exact account of the work.
Logical cores are mapped onto ``workers`` threads; every event writes a
disjoint region, so the result does not depend on the worker count.
"""
from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import PlanError, ShapeError
from .numerics import Fp16Matrix
from .quant import CODES_PER_WORD, PackedInt4Matrix, QuantParams, dequantize_matrix

CUBE_GRANULE = 16
UNIT_REUSE = "unit"
RESIDENT_REUSE = "full-row-resident"
REUSE_POLICIES = (UNIT_REUSE, RESIDENT_REUSE)

SPLITK = "splitk"
DATAPARALLEL = "dataparallel"
FP16 = "fp16"
ENGINES = (SPLITK, DATAPARALLEL, FP16)

DEQUANT = "dequant"
GEMM = "gemm"
REDUCE = "reduce"
PHASES = (DEQUANT, GEMM, REDUCE)

VECTOR = "vector"
CUBE = "cube"

TRAFFIC_FIELDS = (
    "weight_packed_read",
    "dequant_write",
    "dequant_read",
    "weight_read",
    "a_read",
    "split_write",
    "split_read",
    "c_write",
)


@dataclass(frozen=True)
class SplitKPlan:
    """Decomposition parameters: split factor, tile sizes and core counts."""

    splits: int = 1
    m: int = 128
    n: int = 128
    k: int = 128
    num_ai_cores: int = 24
    vec_per_core: int = 2
    reuse: str = UNIT_REUSE

    def __post_init__(self):
        if self.splits < 1:
            raise PlanError(f"split factor must be >= 1, got {self.splits}")
        for name in ("m", "n", "k"):
            v = getattr(self, name)
            if v <= 0 or v % CUBE_GRANULE:
                raise PlanError(f"tile size {name}={v} is not a positive multiple of 16")
        if self.num_ai_cores < 1 or self.vec_per_core < 1:
            raise PlanError("core counts must be positive")
        if self.reuse not in REUSE_POLICIES:
            raise PlanError(f"unknown reuse policy {self.reuse!r}")

    @property
    def vector_units(self) -> int:
        return self.num_ai_cores * self.vec_per_core

    def padded_rows(self, rows: int) -> int:
        return -(-rows // self.m) * self.m

    def split_ranges(self, K: int) -> list[tuple[int, int]]:
        """K element range of each split.

        Split ``i`` owns ``T // S`` consecutive K tiles; the last split also
        takes the remainder when ``S`` does not divide the tile count ``T``.
        """
        tiles = tile_ranges(K, self.k)
        if self.splits > len(tiles):
            raise PlanError(f"split factor {self.splits} exceeds the {len(tiles)} K tiles of K={K}")
        per = len(tiles) // self.splits
        out = []
        for i in range(self.splits):
            t0 = i * per
            t1 = len(tiles) if i == self.splits - 1 else t0 + per
            out.append((tiles[t0][0], tiles[t1 - 1][1]))
        return out


def tile_ranges(total: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(s + size, total)) for s in range(0, total, size)]


@dataclass(slots=True)
class TraceEvent:
    phase: str
    unit: str
    core: int
    tile: tuple
    region: tuple
    traffic: dict
    macs: int = 0
    elems: int = 0

    @property
    def bytes(self) -> int:
        return sum(self.traffic.values())


@dataclass
class ExecTrace:
    engine: str
    M: int
    N: int
    K: int
    plan: SplitKPlan
    events: list = field(default_factory=list)

    def totals(self) -> dict[str, int]:
        out = dict.fromkeys(TRAFFIC_FIELDS, 0)
        for ev in self.events:
            for key, v in ev.traffic.items():
                out[key] += v
        return out

    @property
    def total_bytes(self) -> int:
        return sum(self.totals().values())

    def phase_totals(self) -> dict[str, dict]:
        """Per phase: bytes, MACs and vector elements."""
        out = {p: {"bytes": 0, "macs": 0, "elems": 0} for p in PHASES}
        for ev in self.events:
            acc = out[ev.phase]
            acc["bytes"] += ev.bytes
            acc["macs"] += ev.macs
            acc["elems"] += ev.elems
        return out

    def core_loads(self, phase: str) -> dict[int, tuple[int, int]]:
        """``core -> (bytes, ops)`` for one phase; ops are MACs or elements."""
        loads: dict[int, list[int]] = defaultdict(lambda: [0, 0])
        for ev in self.events:
            if ev.phase == phase:
                slot = loads[ev.core]
                slot[0] += ev.bytes
                slot[1] += ev.macs + ev.elems
        return {c: (b, o) for c, (b, o) in loads.items()}

    def phases(self) -> list[str]:
        seen = {ev.phase for ev in self.events}
        return [p for p in PHASES if p in seen]


@dataclass
class Workspace:
    """Global-memory buffers shared between the phases of one Split-K run."""

    dequant_buffer: Fp16Matrix
    split_buffers: np.ndarray


# ------------------------------------------------------------------ schedules


def _dequant_events(N: int, K: int, plan: SplitKPlan) -> list[TraceEvent]:
    # vector core v takes column strips v, v + AIV, ... and walks all K tiles of each
    events = []
    for si, (c0, c1) in enumerate(tile_ranges(N, plan.n)):
        core = si % plan.vector_units
        for kj, (k0, k1) in enumerate(tile_ranges(K, plan.k)):
            count = (k1 - k0) * (c1 - c0)
            events.append(
                TraceEvent(
                    DEQUANT,
                    VECTOR,
                    core,
                    (si, kj),
                    ((k0, k1), (c0, c1)),
                    {"weight_packed_read": count // 2, "dequant_write": 2 * count},
                    elems=count,
                )
            )
    return events


class _ReuseTracker:
    """Decides whether a tile load hits global memory under the reuse policy."""

    def __init__(self, policy: str):
        self.resident = policy == RESIDENT_REUSE
        self.seen: set = set()

    def load(self, key) -> bool:
        if not self.resident:
            return True
        if key in self.seen:
            return False
        self.seen.add(key)
        return True


def _gemm_event(phase_tile, core, rows, cols, krange, m_pad_rows, weight_key, tracker_a, tracker_b, l, r, ktiles):
    """Traffic of one cube work unit: every K tile in ``ktiles`` loads an A and a B tile."""
    (r0, r1), (c0, c1) = rows, cols
    a_bytes = b_bytes = 0
    for kj, (k0, k1) in ktiles:
        if tracker_a.load(("A", l, kj)):
            a_bytes += 2 * m_pad_rows * (k1 - k0)
        if tracker_b.load(("B", kj, r)):
            b_bytes += 2 * (k1 - k0) * (c1 - c0)
    macs = m_pad_rows * (c1 - c0) * (krange[1] - krange[0])
    traffic = {"a_read": a_bytes, weight_key: b_bytes}
    return TraceEvent(GEMM, CUBE, core, phase_tile, (rows, cols, krange), traffic, macs=macs)


def _schedule(engine: str, M: int, N: int, K: int, plan: SplitKPlan) -> ExecTrace:
    m_pad = plan.padded_rows(M)
    row_tiles = tile_ranges(m_pad, plan.m)
    col_tiles = tile_ranges(N, plan.n)
    k_tiles = list(enumerate(tile_ranges(K, plan.k)))
    trace = ExecTrace(engine, M, N, K, plan)
    tracker_a = _ReuseTracker(plan.reuse)
    tracker_b = _ReuseTracker(plan.reuse)

    if engine != FP16:
        trace.events.extend(_dequant_events(N, K, plan))
    weight_key = "weight_read" if engine == FP16 else "dequant_read"

    unit = 0
    if engine == SPLITK:
        for si, (k0, k1) in enumerate(plan.split_ranges(K)):
            ktiles = [(kj, kr) for kj, kr in k_tiles if k0 <= kr[0] < k1]
            for li, rows in enumerate(row_tiles):
                for ri, cols in enumerate(col_tiles):
                    ev = _gemm_event(
                        (si, li, ri), unit % plan.num_ai_cores, rows, cols, (k0, k1),
                        rows[1] - rows[0], weight_key, tracker_a, tracker_b, li, ri, ktiles,
                    )
                    ev.traffic["split_write"] = 4 * (rows[1] - rows[0]) * (cols[1] - cols[0])
                    trace.events.append(ev)
                    unit += 1
        # ascending chunks of the flattened M' x N buffer, one per vector unit
        size = m_pad * N
        chunk = -(-size // plan.vector_units)
        real = M * N
        for v in range(plan.vector_units):
            e0, e1 = v * chunk, min(size, (v + 1) * chunk)
            if e0 >= e1:
                break
            written = max(0, min(e1, real) - e0)
            trace.events.append(
                TraceEvent(
                    REDUCE,
                    VECTOR,
                    v,
                    (v,),
                    (e0, e1),
                    {"split_read": 4 * plan.splits * (e1 - e0), "c_write": 2 * written},
                    elems=plan.splits * (e1 - e0),
                )
            )
    else:
        for li, rows in enumerate(row_tiles):
            for ri, cols in enumerate(col_tiles):
                ev = _gemm_event(
                    (li, ri), unit % plan.num_ai_cores, rows, cols, (0, K),
                    rows[1] - rows[0], weight_key, tracker_a, tracker_b, li, ri, k_tiles,
                )
                real_rows = max(0, min(rows[1], M) - rows[0])
                ev.traffic["c_write"] = 2 * real_rows * (cols[1] - cols[0])
                trace.events.append(ev)
                unit += 1
    return trace


def build_trace(engine: str, M: int, N: int, K: int, plan: SplitKPlan) -> ExecTrace:
    """Schedule of ``engine`` on an M x K by K x N problem, without running it."""
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")
    if M < 1 or K < 1 or N < 1:
        raise ShapeError(f"degenerate shape M={M} N={N} K={K}")
    if engine != FP16 and N % CODES_PER_WORD:
        raise ShapeError(f"N={N} is not a multiple of 8")
    return _schedule(engine, M, N, K, plan)


# ------------------------------------------------------------------ execution


def _run_phase(events, fn, workers: int) -> None:
    """Run ``fn`` over events, one logical core's events in order per task."""
    by_core: dict[int, list] = defaultdict(list)
    for ev in events:
        by_core[ev.core].append(ev)

    def run_core(evs):
        for ev in evs:
            fn(ev)

    groups = [by_core[c] for c in sorted(by_core)]
    if workers <= 1 or len(groups) <= 1:
        for g in groups:
            run_core(g)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # list() re-raises the first worker exception
        list(pool.map(run_core, groups))


def pad_batch(a: Fp16Matrix, m: int) -> Fp16Matrix:
    """Zero-pad the rows of ``a`` up to a multiple of the tile height ``m``."""
    if m <= 0 or m % CUBE_GRANULE:
        raise PlanError(f"tile height {m} is not a positive multiple of 16")
    rows = -(-a.rows // m) * m
    if rows == a.rows:
        return a
    out = np.zeros((rows, a.cols), np.uint16)
    out[: a.rows] = a.data
    return Fp16Matrix(out)


def reduce_split_buffers(buffers) -> Fp16Matrix:
    """Left-fold binary32 split buffers in ascending index, then cast to binary16."""
    buffers = np.asarray(buffers)
    if buffers.ndim != 3 or buffers.shape[0] < 1:
        raise ShapeError(f"expected an S x M x N stack of buffers, got shape {buffers.shape}")
    if buffers.dtype != np.float32:
        raise ShapeError(f"split buffers must be float32, got {buffers.dtype}")
    return Fp16Matrix(kernels.encode_f16(kernels.fold_splits(buffers)))


def _check_w4a16(a: Fp16Matrix, w: PackedInt4Matrix, params: QuantParams) -> None:
    if a.cols != w.rows:
        raise ShapeError(f"A is {a.rows}x{a.cols} but W is {w.rows}x{w.cols}")
    params.column_scales(w.cols)


def _dequant_phase(w: PackedInt4Matrix, params: QuantParams, trace: ExecTrace, workers: int) -> Fp16Matrix:
    scales = params.column_scales(w.cols)
    zps = params.column_zero_points(w.cols)
    ws = np.empty((w.rows, w.cols), np.uint16)

    def run(ev):
        (k0, k1), (c0, c1) = ev.region
        block = w.words[k0:k1, c0 // CODES_PER_WORD : c1 // CODES_PER_WORD]
        ws[k0:k1, c0:c1] = kernels.dequant_block(block, scales[c0:c1], zps[c0:c1])

    _run_phase([ev for ev in trace.events if ev.phase == DEQUANT], run, workers)
    return Fp16Matrix(ws)


def _output_tiles_phase(a_codes, b_codes, M, trace, workers) -> Fp16Matrix:
    """Data-parallel cube phase: full-K chain per output tile, cast, write C."""
    c = np.zeros((M, b_codes.shape[1]), np.uint16)

    def run(ev):
        (r0, r1), (c0, c1), (k0, k1) = ev.region
        r1 = min(r1, M)
        if r0 >= r1:
            return  # padding rows stay zero and are discarded
        acc = np.zeros((r1 - r0, c1 - c0), np.float32)
        kernels.chain_accumulate(acc, a_codes[r0:r1, k0:k1], b_codes[k0:k1, c0:c1])
        c[r0:r1, c0:c1] = kernels.encode_f16(acc)

    _run_phase([ev for ev in trace.events if ev.phase == GEMM], run, workers)
    return Fp16Matrix(c)


def execute_splitk(
    a: Fp16Matrix,
    w: PackedInt4Matrix,
    params: QuantParams,
    plan: SplitKPlan,
    workers: int = 1,
) -> tuple[Fp16Matrix, ExecTrace, Workspace]:
    """Split-K engine returning its workspace alongside the result and trace."""
    _check_w4a16(a, w, params)
    M, K, N = a.rows, a.cols, w.cols
    trace = build_trace(SPLITK, M, N, K, plan)
    a_pad = pad_batch(a, plan.m)

    ws = _dequant_phase(w, params, trace, workers)

    splits = np.zeros((plan.splits, a_pad.rows, N), np.float32)
    a_codes, b_codes = a_pad.data, ws.data

    def run_gemm(ev):
        si = ev.tile[0]
        (r0, r1), (c0, c1), (k0, k1) = ev.region
        r1 = min(r1, M)
        if r0 >= r1:
            return  # zero rows contribute exact +0 partials; buffer already holds them
        kernels.chain_accumulate(splits[si, r0:r1, c0:c1], a_codes[r0:r1, k0:k1], b_codes[k0:k1, c0:c1])

    _run_phase([ev for ev in trace.events if ev.phase == GEMM], run_gemm, workers)

    flat = splits.reshape(plan.splits, -1)
    c_flat = np.zeros(M * N, np.uint16)

    def run_reduce(ev):
        e0, e1 = ev.region
        e1 = min(e1, M * N)
        if e0 < e1:
            c_flat[e0:e1] = kernels.encode_f16(kernels.fold_splits(flat[:, e0:e1]))

    _run_phase([ev for ev in trace.events if ev.phase == REDUCE], run_reduce, workers)
    return Fp16Matrix(c_flat.reshape(M, N)), trace, Workspace(ws, splits)


def splitk_w4a16_gemm(a, w, params, plan: SplitKPlan, workers: int = 1):
    """``C = A @ dequant(W)`` via dequant / Split-K GEMM / reduce. Returns ``(C, trace)``."""
    c, trace, _ = execute_splitk(a, w, params, plan, workers)
    return c, trace


def dataparallel_w4a16_gemm(a, w, params, plan: SplitKPlan, workers: int = 1):
    """Output-tile-parallel W4A16 GEMM through the same dequant workspace."""
    _check_w4a16(a, w, params)
    M, K, N = a.rows, a.cols, w.cols
    trace = build_trace(DATAPARALLEL, M, N, K, plan)
    ws = _dequant_phase(w, params, trace, workers)
    c = _output_tiles_phase(a.data, ws.data, M, trace, workers)
    return c, trace


def fp16_gemm(a: Fp16Matrix, b: Fp16Matrix, plan: SplitKPlan, workers: int = 1):
    """Native binary16 GEMM baseline with the data-parallel tiling."""
    if a.cols != b.rows:
        raise ShapeError(f"A is {a.rows}x{a.cols} but B is {b.rows}x{b.cols}")
    M, K, N = a.rows, a.cols, b.cols
    trace = build_trace(FP16, M, N, K, plan)
    c = _output_tiles_phase(a.data, b.data, M, trace, workers)
    return c, trace


def run_engine(engine: str, a, w, params, plan: SplitKPlan, workers: int = 1, b: Fp16Matrix | None = None):
    """Dispatch by name; the fp16 engine dequantizes W up front unless ``b`` is given."""
    if engine == SPLITK:
        return splitk_w4a16_gemm(a, w, params, plan, workers)
    if engine == DATAPARALLEL:
        return dataparallel_w4a16_gemm(a, w, params, plan, workers)
    if engine == FP16:
        if b is None:
            b = dequantize_matrix(w, params)
        return fp16_gemm(a, b, plan, workers)
    raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")

