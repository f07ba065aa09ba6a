"""Numba switch.

Set ``N2N_DISABLE_JIT=1`` before import to run every kernel through its pure
numpy implementation. Numba being absent has the same effect.
"""

from __future__ import annotations

import os

_FALSEY = {"", "0", "false", "no", "off"}

JIT_REQUESTED = os.environ.get("N2N_DISABLE_JIT", "").strip().lower() in _FALSEY

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

NUMBA_AVAILABLE = _numba is not None
USE_JIT = JIT_REQUESTED and NUMBA_AVAILABLE


def njit(*args, **kwargs):
    """``numba.njit`` with caching on, or a no-op decorator without numba."""
    kwargs.setdefault("cache", True)
    if _numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return _numba.njit(*args, **kwargs)
