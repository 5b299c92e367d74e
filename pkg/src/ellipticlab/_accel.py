"""Switch between numba-compiled kernels and their pure-numpy twins.

Set ``ELLIPTICLAB_NUMBA=0`` before import to force the numpy path.  When
numba cannot be imported the numpy path is used silently.
"""

import os

_flag = os.environ.get("ELLIPTICLAB_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    if not _requested:
        raise ImportError
    import numba

    njit = numba.njit
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


USE_NUMBA = HAVE_NUMBA


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
