"""Selects numba or pure-numpy kernels.

Set ``WAMSPLAN_DISABLE_NUMBA=1`` to force the numpy path (useful for debugging
and for the benchmark's baseline).
"""
import os

_disabled = os.environ.get("WAMSPLAN_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _disabled:
        raise ImportError("numba disabled by WAMSPLAN_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        # bare @njit or @njit(cache=True)
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator


def backend_name():
    return "numba" if HAVE_NUMBA else "numpy"
