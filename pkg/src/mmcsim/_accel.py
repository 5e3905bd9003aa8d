"""Optional numba acceleration.

Set ``MMCSIM_DISABLE_NUMBA=1`` before import to run every kernel as plain
numpy. The flag is read once, at import time.
"""
import functools
import os

_FLAG = os.environ.get("MMCSIM_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not DISABLED_BY_ENV

if USE_NUMBA:
    jit = functools.partial(numba.njit, cache=True)
else:
    def jit(func=None, **kwargs):
        if func is None:
            return lambda f: f
        return func
