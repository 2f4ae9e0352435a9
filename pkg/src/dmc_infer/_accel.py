"""Backend switch for the compiled kernels.

Set ``DMC_INFER_NO_NUMBA=1`` to force the pure-numpy path; it is also used
automatically when numba cannot be imported.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

NUMBA_AVAILABLE = numba is not None
_DISABLED = os.environ.get("DMC_INFER_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")
BACKENDS = ("numba", "numpy")


def default_backend():
    return "numba" if NUMBA_AVAILABLE and not _DISABLED else "numpy"


def resolve_backend(name=None):
    if name is None:
        return default_backend()
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba backend requested but numba is not installed")
    return name


def jit(fn):
    """``numba.njit(cache=True, nogil=True)`` when numba is importable."""
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
