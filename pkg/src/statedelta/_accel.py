"""Backend switch for the hot numeric kernels.

Set ``STATEDELTA_NUMBA=0`` to force the pure-numpy path. Any other value (or
unset) uses numba when it can be imported.
"""
import os

_flag = os.environ.get("STATEDELTA_NUMBA", "1").strip().lower()
_wanted = _flag not in ("0", "false", "no", "off")

try:
    from numba import njit as _njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    NUMBA_AVAILABLE = False

# the jitted kernels are always compiled when numba imports, so both paths can
# be compared in one process; the flag only decides which one is dispatched
HAS_NUMBA = NUMBA_AVAILABLE and _wanted


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator."""
    if NUMBA_AVAILABLE:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend_name() -> str:
    return "numba" if HAS_NUMBA else "numpy"
