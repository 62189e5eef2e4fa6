"""Numba switch.

Hot loops are written once as plain Python over numpy arrays. When numba is
importable and ``PASR_DISABLE_NUMBA`` is unset (or ``0``), they are compiled
with ``@njit``; otherwise the callers fall back to vectorised numpy versions.
"""

import os

_FLAG = os.environ.get("PASR_DISABLE_NUMBA", "0").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba ships with the dev env
    _numba = None

USE_NUMBA = _numba is not None and _FLAG in ("", "0", "false", "no")


def njit(func):
    """Compile ``func`` with numba (cached) if available, else return it unchanged."""
    if _numba is None:
        return func
    return _numba.njit(cache=True, nogil=True)(func)


def backend():
    return "numba" if USE_NUMBA else "numpy"
