"""Command-line entry point: ``w4a16 {quantize,gemm,sweep,traffic}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import formats
from ._accel import backend_name
from .engine import ENGINES, FP16, SPLITK, TRAFFIC_FIELDS, run_engine
from .errors import W4A16Error
from .experiment import AUTO, BENCHMARK_SHAPES, ExperimentSpec, rows_to_csv, run_sweep
from .machine import MachineConfig, load_config, model_cost, predicted_speedup, traffic_for
from .quant import MODES, PER_CHANNEL, dequantize_matrix, max_abs_error, quantize_matrix


def _shape(text: str) -> tuple[int, int]:
    try:
        n, k = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N,K, got {text!r}") from None
    return n, k


def _tiles(text: str) -> tuple[int, int, int]:
    try:
        m, n, k = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected m,n,k, got {text!r}") from None
    return m, n, k


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _split_list(text: str) -> list:
    return [AUTO if x == AUTO else int(x) for x in text.split(",") if x]


def _engine_list(text: str) -> list[str]:
    names = [x for x in text.split(",") if x]
    bad = [x for x in names if x not in ENGINES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown engine(s) {bad}; choose from {ENGINES}")
    return names


def _config(path) -> MachineConfig:
    return load_config(path) if path else MachineConfig()


def cmd_quantize(args) -> int:
    wf = formats.read_matrix(args.input)
    w, params = quantize_matrix(wf, args.mode)
    formats.write_packed(args.out, w, params)
    print(f"quantized {w.rows}x{w.cols} ({params.mode}) -> {args.out}")
    print(f"max_abs_error {max_abs_error(wf, w, params)!r}")
    return 0


def cmd_gemm(args) -> int:
    a = formats.read_matrix(args.a)
    w, params = formats.read_packed(args.w)
    cfg = _config(args.config)
    m, n, k = args.tile
    plan = cfg.plan(args.split if args.engine == SPLITK else 1, args.tile, args.reuse)
    b = dequantize_matrix(w, params) if args.engine == FP16 else None
    c, trace = run_engine(args.engine, a, w, params, plan, args.workers, b=b)
    formats.write_matrix(args.out, c)

    M, K, N = a.rows, a.cols, w.cols
    totals = trace.totals()
    closed = traffic_for(args.engine, M, N, K, plan).as_dict()
    print(f"engine {args.engine}  M={M} N={N} K={K}  S={plan.splits}  tiles={m},{n},{k}  backend={backend_name()}")
    for key in TRAFFIC_FIELDS:
        print(f"  {key:<20} {totals[key]:>14}")
    print(f"  {'total':<20} {trace.total_bytes:>14}")
    print(f"trace matches closed form: {totals == closed}")
    cost = model_cost(args.engine, M, N, K, cfg, plan)
    for phase, sec in cost.phase_seconds.items():
        print(f"  model {phase:<8} {sec:.6e} s ({cost.bound_kind[phase]}-bound)")
    print(f"  model total    {cost.total:.6e} s")
    return 0


def cmd_sweep(args) -> int:
    spec = ExperimentSpec(
        shapes=args.shape or list(BENCHMARK_SHAPES),
        batches=args.m,
        splits=args.split,
        engines=args.engine,
        seed=args.seed,
        config_path=args.config,
        tiles=args.tile,
        reuse=args.reuse,
    )
    text = rows_to_csv(run_sweep(spec, workers=args.workers))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_traffic(args) -> int:
    cfg = _config(args.config)
    N, K = args.shape
    M = args.m
    sp = predicted_speedup(N, K, M, None if args.split == AUTO else int(args.split), cfg, args.tile, args.reuse)
    S = sp["splits"]
    print(f"N={N} K={K} M={M} S={S} tiles={','.join(map(str, args.tile))} reuse={args.reuse}")
    for engine in ENGINES:
        plan = cfg.plan(S if engine == SPLITK else 1, args.tile, args.reuse)
        rep = traffic_for(engine, M, N, K, plan)
        cost = model_cost(engine, M, N, K, cfg, plan)
        print(f"[{engine}] total {rep.total} B, weight path {rep.weight_path} B, model {cost.total:.6e} s")
        for key, v in rep.as_dict().items():
            if v:
                print(f"  {key:<20} {v:>14}")
    print(f"splitk_vs_dataparallel {sp['splitk_vs_dataparallel']:.4f}")
    print(f"w4a16_vs_fp16          {sp['w4a16_vs_fp16']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="w4a16", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, split_default):
        p.add_argument("--tile", type=_tiles, default=(128, 128, 128), help="m,n,k tile sizes")
        p.add_argument("--config", help="machine config file (key = value)")
        p.add_argument("--reuse", choices=("unit", "full-row-resident"), default="unit")
        p.add_argument("--split", type=split_default[0], default=split_default[1])

    q = sub.add_parser("quantize", help="quantize an F16M matrix file to packed INT4")
    q.add_argument("input")
    q.add_argument("--mode", choices=MODES, default=PER_CHANNEL)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_quantize)

    g = sub.add_parser("gemm", help="run one engine on A and packed W")
    g.add_argument("a")
    g.add_argument("w")
    g.add_argument("--engine", choices=ENGINES, default=SPLITK)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", required=True)
    common(g, (int, 1))
    g.set_defaults(func=cmd_gemm)

    s = sub.add_parser("sweep", help="shape x batch x split sweep to CSV")
    s.add_argument("--shape", type=_shape, action="append", help="N,K (repeatable); default: the six benchmark shapes")
    s.add_argument("--m", type=_int_list, default=[1, 8, 16, 32], help="comma-separated batch sizes")
    s.add_argument("--engine", type=_engine_list, default=list(ENGINES))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    common(s, (_split_list, [AUTO]))
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("traffic", help="closed-form traffic and modelled time for one shape")
    t.add_argument("--shape", type=_shape, required=True)
    t.add_argument("--m", type=int, default=1)
    common(t, (str, AUTO))
    t.set_defaults(func=cmd_traffic)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (W4A16Error, OSError, ValueError) as exc:
        print(f"w4a16 {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
