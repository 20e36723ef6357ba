"""Numba switch for the hot kernels.

Set ``TANDEM_TLC_NUMBA=0`` to run every kernel as plain Python on numpy
arrays.  The flag is read once, at import time.
"""

import os

_FLAG = os.environ.get("TANDEM_TLC_NUMBA", "1").strip().lower()
USE_NUMBA = _FLAG not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if USE_NUMBA:

    def jit(fn):
        return numba.njit(cache=True)(fn)

else:

    def jit(fn):
        return fn
