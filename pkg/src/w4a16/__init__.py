"""W4A16 Split-K GEMM reference engines and a decoupled-NPU cost model."""
from ._accel import USE_NUMBA, backend_name
from .engine import (
    ExecTrace,
    SplitKPlan,
    Workspace,
    build_trace,
    dataparallel_w4a16_gemm,
    fp16_gemm,
    pad_batch,
    reduce_split_buffers,
    splitk_w4a16_gemm,
)
from .errors import DomainError, FormatError, PlanError, ShapeError, W4A16Error
from .machine import (
    CostReport,
    MachineConfig,
    TrafficReport,
    estimate_time,
    predicted_speedup,
    traffic_fp16,
    traffic_w4a16_dataparallel,
    traffic_w4a16_splitk,
)
from .numerics import Fp16Matrix, f16_from_f32, f16_to_f32, fma_acc
from .quant import (
    PackedInt4Matrix,
    QuantParams,
    dequantize,
    dequantize_tile,
    pack,
    quantize,
    quantize_matrix,
    unpack,
)

__version__ = "0.1.0"
