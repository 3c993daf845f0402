"""Backend switch for the numeric kernels.

Kernels come in pairs: a numba ``@njit`` loop version and a vectorised
numpy version. ``CFNAV_BACKEND=numpy`` forces the fallback; the default
uses numba when it imports cleanly.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    HAVE_NUMBA = False


def _resolve_backend():
    requested = os.environ.get("CFNAV_BACKEND", "numba").strip().lower()
    if requested not in ("numba", "numpy"):
        raise ValueError(f"CFNAV_BACKEND must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        return "numpy"
    return requested


BACKEND = _resolve_backend()


def njit(*args, **kwargs):
    """``numba.njit`` with caching on, or an identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]):
        return args[0]
    return lambda f: f


def pick(numba_impl, numpy_impl, backend=None):
    """Return the implementation for ``backend`` (defaults to the active one)."""
    backend = backend or BACKEND
    if backend == "numba" and HAVE_NUMBA:
        return numba_impl
    return numpy_impl
