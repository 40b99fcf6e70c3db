"""Numba switch for the hot kernels.

Set ``CLSTM_ROM_NUMBA=0`` in the environment before import to force the
pure-numpy code paths (useful for debugging and for the benchmark).
"""

import os

_FLAG = os.environ.get("CLSTM_ROM_NUMBA", "1").strip().lower()

try:
    from numba import njit as _numba_njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _numba_njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is enabled, identity otherwise."""
    if not USE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda func: func
    kwargs.setdefault("cache", True)
    return _numba_njit(*args, **kwargs)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
