"""Backend switch for the compiled kernels.

Set ``ISTN_DSS_BACKEND=numpy`` to force the pure-numpy code paths; the default
uses numba when it imports cleanly.
"""

from __future__ import annotations

import os

_REQUESTED = os.environ.get("ISTN_DSS_BACKEND", "numba").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

USE_NUMBA = _REQUESTED != "numpy" and _numba is not None


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if _numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _numba.njit(*args, **kwargs)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
