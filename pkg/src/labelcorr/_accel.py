"""Backend selection for the compiled kernels.

Set ``LABELCORR_DISABLE_NUMBA=1`` to force the pure-numpy path. The flag is
read once at import time.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None

NUMBA_DISABLED = os.environ.get("LABELCORR_DISABLE_NUMBA", "0").strip().lower() not in _FALSY
USE_NUMBA = numba is not None and not NUMBA_DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with ``numba.njit(cache=True)`` when numba is usable."""
    if numba is None:
        return func
    return numba.njit(cache=True, nogil=True)(func)
