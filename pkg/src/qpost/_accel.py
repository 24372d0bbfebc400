"""JIT switch for the hot kernels.

Set ``QPOST_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
The kernels are written so that both paths consume the same pre-drawn
random numbers; results agree up to floating-point rounding.
"""
import os

_FLAG = os.environ.get("QPOST_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USING_NUMBA = numba is not None and not DISABLED


def njit(func=None, **options):
    """``numba.njit`` when enabled, otherwise the identity decorator."""

    def wrap(f):
        if USING_NUMBA:
            opts = {"cache": True}
            opts.update(options)
            return numba.njit(**opts)(f)
        return f

    if func is not None:
        return wrap(func)
    return wrap
