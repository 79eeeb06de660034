"""Numba/numpy backend selection.

Set ``W4A16_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when numba
is importable. Both backends are bit-identical; the test-suite checks this.
"""
import os

_FLAG = os.environ.get("W4A16_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, identity decorator otherwise.

    fastmath is never enabled: the kernels rely on strict IEEE float32 rounding.
    """
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if not HAS_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
