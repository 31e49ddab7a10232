"""Numba switch for the hot kernels.

Set ``ROBUST_CBF_NUMBA=0`` to run every kernel on the pure-numpy path. The
flag is read once at import time.
"""
import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("ROBUST_CBF_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def jit(fn):
    """Compile ``fn`` with ``numba.njit`` when acceleration is on, else return it unchanged."""
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


def backend():
    return "numba" if USE_NUMBA else "numpy"
