"""JIT switch shared by the kernel modules.

Set ``HDNOMA_DISABLE_JIT=1`` to run every kernel through its pure-numpy path.
"""
import os

_flag = os.environ.get("HDNOMA_DISABLE_JIT", "").strip().lower()
DISABLE_JIT = _flag in ("1", "true", "yes", "on")

try:
    import numba as _nb
except ImportError:  # pragma: no cover
    _nb = None
    DISABLE_JIT = True

HAVE_NUMBA = _nb is not None


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise.

    The returned function is always compiled when numba is importable, so the
    benchmark can compare both paths; dispatchers consult ``DISABLE_JIT``.
    """
    if _nb is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda func: func
    kwargs.setdefault("cache", True)
    return _nb.njit(*args, **kwargs)
