"""Backend switch for the hot kernels.

Set ``HFSAD_BACKEND=numpy`` to bypass numba entirely (useful for debugging or
platforms without LLVM). The default is ``numba`` when it imports cleanly.
"""

import functools
import os

BACKEND_ENV = "HFSAD_BACKEND"


def _resolve_backend():
    requested = os.environ.get(BACKEND_ENV, "numba").strip().lower()
    if requested not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        return "numpy"
    return "numba"


BACKEND = _resolve_backend()
NUMBA_AVAILABLE = BACKEND == "numba"

if NUMBA_AVAILABLE:
    import numba

    jit = functools.partial(numba.njit, cache=True, nogil=True)
else:
    def jit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
