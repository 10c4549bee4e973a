"""Kernel backend selection.

The compiled Cython extension is preferred; the numpy fallback is used when
the extension is unavailable or when NETADJUST_KERNEL=numpy is set.  Both
expose the same ``neighbor_sum(indptr, indices, v)`` signature.
"""

import os

_forced = os.environ.get("NETADJUST_KERNEL", "").lower()

if _forced == "numpy":
    from .numpy_backend import neighbor_sum

    BACKEND = "numpy"
else:
    try:
        from ._cykernels import neighbor_sum

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        from .numpy_backend import neighbor_sum

        BACKEND = "numpy"

__all__ = ["neighbor_sum", "BACKEND"]
