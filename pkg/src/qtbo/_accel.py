"""Select between numba-compiled kernels and the plain numpy path.

Set ``QTBO_DISABLE_NUMBA=1`` (or any of ``true``/``yes``) before import to run
every kernel as ordinary Python over numpy. Results are identical up to
floating-point reassociation inside BLAS calls.
"""

import os

_flag = os.environ.get("QTBO_DISABLE_NUMBA", "").strip().lower()
DISABLED = _flag in {"1", "true", "yes", "on"}

try:
    if DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def jit(func):
    """``njit(cache=True, nogil=True)`` when numba is active, identity otherwise."""
    if HAVE_NUMBA:
        return _njit(cache=True, nogil=True)(func)
    return func


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
