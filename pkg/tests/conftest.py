import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from w4a16 import kernels  # noqa: E402
from w4a16.numerics import Fp16Matrix  # noqa: E402
from w4a16.quant import PER_CHANNEL, PackedInt4Matrix, QuantParams  # noqa: E402


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    return kernels.BACKENDS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def grid_instance(rng, M, K, N):
    """Integer activations and power-of-two scales: every partial sum is exact in binary32."""
    a = Fp16Matrix.from_float(rng.integers(-4, 5, size=(M, K)))
    codes = rng.integers(0, 16, size=(K, N), dtype=np.uint8)
    scales = np.ldexp(1.0, rng.integers(-2, 2, size=N)).astype(np.float32)
    params = QuantParams(PER_CHANNEL, scales, np.full(N, 8, np.uint8))
    return a, PackedInt4Matrix.from_codes(codes), params, codes


def random_instance(rng, M, K, N):
    """Activations uniform in [-1, 1]; dequantized weights in [-1, 0.875]."""
    a = Fp16Matrix.from_float(rng.uniform(-1, 1, size=(M, K)).astype(np.float32))
    codes = rng.integers(0, 16, size=(K, N), dtype=np.uint8)
    params = QuantParams(PER_CHANNEL, np.full(N, 0.125, np.float32), np.full(N, 8, np.uint8))
    return a, PackedInt4Matrix.from_codes(codes), params, codes


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
