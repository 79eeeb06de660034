"""Analytic cost model of a decoupled cube/vector accelerator.

Cube and vector cores only talk through global memory, so the W4A16 weight
path is: read packed nibbles, write dequantized binary16 to a workspace, read
it back into the cube core. Per phase, double buffering is assumed to overlap
transfer and compute perfectly, so the phase time is the larger of the two
scaled by ``overlap_efficiency``. Phases are barrier-separated and add up.

Load balance is taken from the engine schedule: the phase time is set by the
busiest core, which gets a ``1/units`` share of the global bandwidth.

The default machine constants are plausible placeholders, not measurements.
Only ratios, orderings and monotonicity of the model are meaningful.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass
from pathlib import Path

from .engine import (
    CUBE,
    DATAPARALLEL,
    DEQUANT,
    FP16,
    GEMM,
    PHASES,
    REDUCE,
    RESIDENT_REUSE,
    SPLITK,
    TRAFFIC_FIELDS,
    UNIT_REUSE,
    VECTOR,
    ExecTrace,
    SplitKPlan,
    build_trace,
)
from .errors import FormatError

MEMORY = "memory"
COMPUTE = "compute"

PHASE_UNIT = {DEQUANT: VECTOR, GEMM: CUBE, REDUCE: VECTOR}


@dataclass(frozen=True)
class MachineConfig:
    """Machine constants. Defaults are plausible, not measured."""

    num_ai_cores: int = 24
    cube_per_core: int = 1
    vec_per_core: int = 2
    gm_bandwidth: float = 1.0e12
    cube_macs_per_cycle_per_core: int = 4096
    vec_elems_per_cycle_per_core: int = 256
    clock: float = 1.5e9
    overlap_efficiency: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"machine parameter {f.name} must be positive, got {v!r}")
        if self.overlap_efficiency > 1:
            raise ValueError("overlap_efficiency must lie in (0, 1]")
        if self.cube_per_core != 1:
            raise ValueError("the modelled AI core has exactly one cube core")

    def units(self, kind: str) -> int:
        return self.num_ai_cores * (self.vec_per_core if kind == VECTOR else self.cube_per_core)

    def unit_rate(self, kind: str) -> float:
        """Ops per second of a single cube or vector unit."""
        if kind == CUBE:
            return self.cube_macs_per_cycle_per_core * self.clock
        return self.vec_elems_per_cycle_per_core * self.clock / self.vec_per_core

    def plan(self, splits: int = 1, tiles=(128, 128, 128), reuse: str = UNIT_REUSE) -> SplitKPlan:
        m, n, k = tiles
        return SplitKPlan(splits, m, n, k, self.num_ai_cores, self.vec_per_core, reuse)


_INT_FIELDS = {f.name for f in dataclasses.fields(MachineConfig) if f.type in ("int", int)}


def parse_config(text: str) -> MachineConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys are MachineConfig fields."""
    known = {f.name for f in dataclasses.fields(MachineConfig)}
    values = {}
    offset = 0
    for lineno, raw in enumerate(text.splitlines(keepends=True), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            key, sep, val = (part.strip() for part in line.partition("="))
            if not sep or not key or not val:
                raise FormatError(f"line {lineno}: expected 'key = value'", offset)
            if key not in known:
                raise FormatError(f"line {lineno}: unknown key {key!r}", offset)
            try:
                values[key] = int(val) if key in _INT_FIELDS else float(val)
            except ValueError:
                raise FormatError(f"line {lineno}: bad value {val!r} for {key}", offset) from None
        offset += len(raw.encode())
    return MachineConfig(**values)


def load_config(path) -> MachineConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: MachineConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)!r}\n" for f in dataclasses.fields(cfg))


# --------------------------------------------------------------------- traffic


@dataclass(frozen=True)
class TrafficReport:
    """Global-memory bytes of one GEMM, by category."""

    strategy: str
    weight_packed_read: int = 0
    dequant_write: int = 0
    dequant_read: int = 0
    weight_read: int = 0
    a_read: int = 0
    split_write: int = 0
    split_read: int = 0
    c_write: int = 0

    def as_dict(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in TRAFFIC_FIELDS}

    @property
    def total(self) -> int:
        return sum(self.as_dict().values())

    @property
    def weight_path(self) -> int:
        """Bytes spent moving B, packed or not, into the cube core."""
        return self.weight_packed_read + self.dequant_write + self.dequant_read + self.weight_read

    def phase_bytes(self) -> dict[str, int]:
        out = {
            DEQUANT: self.weight_packed_read + self.dequant_write,
            GEMM: self.dequant_read + self.weight_read + self.a_read + self.split_write,
            REDUCE: self.split_read,
        }
        out[REDUCE if self.strategy == SPLITK else GEMM] += self.c_write
        return out


def _reuse_terms(M: int, N: int, K: int, plan: SplitKPlan) -> tuple[int, int, int]:
    """``(M', B bytes into the cube, A bytes into the cube)``."""
    m_pad = plan.padded_rows(M)
    if plan.reuse == RESIDENT_REUSE:
        return m_pad, 2 * K * N, 2 * m_pad * K
    return m_pad, 2 * K * N * (m_pad // plan.m), 2 * m_pad * K * math.ceil(N / plan.n)


def traffic_w4a16_splitk(M: int, N: int, K: int, S: int, plan: SplitKPlan) -> TrafficReport:
    m_pad, b_read, a_read = _reuse_terms(M, N, K, plan)
    return TrafficReport(
        SPLITK,
        weight_packed_read=K * N // 2,
        dequant_write=2 * K * N,
        dequant_read=b_read,
        a_read=a_read,
        split_write=4 * S * m_pad * N,
        split_read=4 * S * m_pad * N,
        c_write=2 * M * N,
    )


def traffic_w4a16_dataparallel(M: int, N: int, K: int, plan: SplitKPlan) -> TrafficReport:
    _, b_read, a_read = _reuse_terms(M, N, K, plan)
    return TrafficReport(
        DATAPARALLEL,
        weight_packed_read=K * N // 2,
        dequant_write=2 * K * N,
        dequant_read=b_read,
        a_read=a_read,
        c_write=2 * M * N,
    )


def traffic_fp16(M: int, N: int, K: int, plan: SplitKPlan) -> TrafficReport:
    _, b_read, a_read = _reuse_terms(M, N, K, plan)
    return TrafficReport(FP16, weight_read=b_read, a_read=a_read, c_write=2 * M * N)


def traffic_for(engine: str, M: int, N: int, K: int, plan: SplitKPlan) -> TrafficReport:
    if engine == SPLITK:
        return traffic_w4a16_splitk(M, N, K, plan.splits, plan)
    if engine == DATAPARALLEL:
        return traffic_w4a16_dataparallel(M, N, K, plan)
    if engine == FP16:
        return traffic_fp16(M, N, K, plan)
    raise ValueError(f"unknown engine {engine!r}")


def phase_ops(engine: str, M: int, N: int, K: int, plan: SplitKPlan) -> dict[str, int]:
    """Dequantized elements, cube MACs (padded rows included) and reduced elements."""
    m_pad = plan.padded_rows(M)
    ops = {GEMM: m_pad * N * K}
    if engine != FP16:
        ops[DEQUANT] = K * N
    if engine == SPLITK:
        ops[REDUCE] = plan.splits * m_pad * N
    return {p: ops[p] for p in PHASES if p in ops}


def weight_path_ratio(M: int, N: int, K: int, plan: SplitKPlan) -> float:
    """W4A16 weight-path bytes over the binary16 baseline's."""
    return traffic_w4a16_dataparallel(M, N, K, plan).weight_path / traffic_fp16(M, N, K, plan).weight_path


# ------------------------------------------------------------------------ time


@dataclass(frozen=True)
class CostReport:
    phase_seconds: dict
    bound_kind: dict
    memory_seconds: dict
    compute_seconds: dict

    @property
    def total(self) -> float:
        return sum(self.phase_seconds[p] for p in PHASES if p in self.phase_seconds)


def estimate_time(traffic: TrafficReport, ops: dict, cfg: MachineConfig, shares: dict | None = None) -> CostReport:
    """Per phase ``max(memory, compute) / overlap_efficiency``; phases add.

    ``shares`` maps a phase to the fraction of its work on the busiest unit;
    a missing entry means perfect balance, which reduces the memory term to
    ``bytes / gm_bandwidth`` and the compute term to ``ops / throughput``.
    A tie between the two terms is reported as memory-bound.
    """
    shares = shares or {}
    pbytes = traffic.phase_bytes()
    seconds, bound, mem_s, comp_s = {}, {}, {}, {}
    for phase in PHASES:
        nbytes = pbytes.get(phase, 0)
        nops = ops.get(phase, 0)
        if nbytes == 0 and nops == 0:
            continue
        kind = PHASE_UNIT[phase]
        units = cfg.units(kind)
        share = shares.get(phase, 1.0 / units)
        mem = nbytes * share * units / cfg.gm_bandwidth
        comp = nops * share / cfg.unit_rate(kind)
        mem_s[phase], comp_s[phase] = mem, comp
        seconds[phase] = max(mem, comp) / cfg.overlap_efficiency
        bound[phase] = MEMORY if mem >= comp else COMPUTE
    return CostReport(seconds, bound, mem_s, comp_s)


def busiest_shares(trace: ExecTrace) -> dict[str, float]:
    """Fraction of each phase's ops carried by its most loaded core."""
    out = {}
    for phase in trace.phases():
        loads = trace.core_loads(phase)
        total = sum(o for _, o in loads.values())
        if total:
            out[phase] = max(o for _, o in loads.values()) / total
    return out


def model_cost(engine: str, M: int, N: int, K: int, cfg: MachineConfig, plan: SplitKPlan) -> CostReport:
    """Modelled time of one engine; core counts come from ``cfg``."""
    plan = dataclasses.replace(plan, num_ai_cores=cfg.num_ai_cores, vec_per_core=cfg.vec_per_core)
    if engine != SPLITK:
        plan = dataclasses.replace(plan, splits=1)
    shares = _schedule_shares(engine, M, N, K, plan)
    return estimate_time(traffic_for(engine, M, N, K, plan), phase_ops(engine, M, N, K, plan), cfg, shares)


@functools.lru_cache(maxsize=256)
def _schedule_shares(engine: str, M: int, N: int, K: int, plan: SplitKPlan) -> dict[str, float]:
    # the schedule ignores bandwidth and clock, so config sweeps reuse it
    return busiest_shares(build_trace(engine, M, N, K, plan))


def candidate_splits(K: int, plan: SplitKPlan, max_splits: int = 8) -> list[int]:
    k_tiles = math.ceil(K / plan.k)
    out, s = [], 1
    while s <= min(max_splits, k_tiles):
        out.append(s)
        s *= 2
    return out


def best_split(M: int, N: int, K: int, cfg: MachineConfig, plan: SplitKPlan) -> int:
    """Power-of-two split factor (up to 8) with the lowest modelled time."""
    best, best_t = 1, math.inf
    for s in candidate_splits(K, plan):
        t = model_cost(SPLITK, M, N, K, cfg, dataclasses.replace(plan, splits=s)).total
        if t < best_t:
            best, best_t = s, t
    return best


def predicted_speedup(
    N: int,
    K: int,
    M: int,
    S: int | None = None,
    cfg: MachineConfig | None = None,
    tiles=(128, 128, 128),
    reuse: str = UNIT_REUSE,
) -> dict:
    """Modelled Split-K speedups over the data-parallel and binary16 kernels.

    ``S=None`` picks the split with :func:`best_split`.
    """
    cfg = cfg or MachineConfig()
    plan = cfg.plan(1, tiles, reuse)
    if S is None:
        S = best_split(M, N, K, cfg, plan)
    t_sk = model_cost(SPLITK, M, N, K, cfg, dataclasses.replace(plan, splits=S)).total
    t_dp = model_cost(DATAPARALLEL, M, N, K, cfg, plan).total
    t_fp = model_cost(FP16, M, N, K, cfg, plan).total
    return {
        "splits": S,
        "splitk_seconds": t_sk,
        "dataparallel_seconds": t_dp,
        "fp16_seconds": t_fp,
        "splitk_vs_dataparallel": t_dp / t_sk,
        "w4a16_vs_fp16": t_fp / t_sk,
    }
