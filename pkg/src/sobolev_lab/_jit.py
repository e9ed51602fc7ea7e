"""Backend selection for the hot kernels.

Set ``SOBOLEV_LAB_NO_JIT=1`` to force the pure-numpy code paths even when
numba is importable.
"""

import os

_FLAG = os.environ.get("SOBOLEV_LAB_NO_JIT", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        """No-op stand-in so decorated kernels still import."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap


# the *_numba kernels stay compiled when numba exists; the flag only picks the default
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def backend():
    return "numba" if USE_NUMBA else "numpy"
