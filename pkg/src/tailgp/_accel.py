"""Optional numba acceleration.

Set ``TAILGP_NUMBA=0`` in the environment before import to force the
pure-numpy code paths (handy for debugging and for the benchmark).
"""
import os
import warnings

# an old system TBB only disables one numba threading layer; say nothing
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

_flag = os.environ.get("TAILGP_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    if not _requested:
        raise ImportError("numba disabled by TAILGP_NUMBA")
    from numba import njit as _njit, prange

    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False
    prange = range

    def _njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


USE_NUMBA = NUMBA_AVAILABLE


def jit(*args, **kwargs):
    """``numba.njit`` with caching on, or a no-op when numba is off."""
    kwargs.setdefault("cache", True)
    return _njit(*args, **kwargs)


def set_backend(name):
    """Select ``"numba"``, ``"numpy"`` or ``"auto"``; returns the backend now in use."""
    global USE_NUMBA
    if name not in ("auto", "numba", "numpy"):
        raise ValueError(f"backend must be 'auto', 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise ValueError("numba backend requested but numba is unavailable or disabled")
    USE_NUMBA = NUMBA_AVAILABLE if name == "auto" else name == "numba"
    return backend()


def backend():
    return "numba" if USE_NUMBA else "numpy"
