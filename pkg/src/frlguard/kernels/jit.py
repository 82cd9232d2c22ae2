"""Backend selection for the hot kernels.

Set FRLGUARD_NO_NUMBA=1 before import to skip JIT compilation and run the
kernels as plain Python/numpy. The fallback executes the exact same
floating-point operations in the same order, so both backends produce
bitwise-identical results (see tests/test_kernels.py). The fallback is
orders of magnitude slower and is meant for verification and benchmarking,
not for full training runs.
"""

import os

USE_NUMBA = os.environ.get("FRLGUARD_NO_NUMBA", "0").lower() not in ("1", "true", "yes")

if USE_NUMBA:
    from numba import njit

    def kernel(func):
        return njit(cache=True)(func)

else:

    def kernel(func):
        return func


def python_impl(func):
    """Return the un-jitted version of a kernel (for benchmarks)."""
    return getattr(func, "py_func", func)
