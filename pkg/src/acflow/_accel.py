"""Numba switch.

Every hot kernel in :mod:`acflow.kernels` has two implementations: a
numba-compiled loop nest and a vectorised numpy version.  The numba path is
used when numba imports and ``ACFLOW_DISABLE_NUMBA`` is unset (or ``0``).
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

ENV_FLAG = "ACFLOW_DISABLE_NUMBA"

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get(ENV_FLAG, "0").strip().lower() not in (
    "1",
    "true",
    "yes",
    "on",
)


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` or a no-op when numba is unavailable."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if not HAVE_NUMBA:
            return f
        return numba.njit(**kwargs)(f)

    if func is not None:
        return wrap(func)
    return wrap


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
