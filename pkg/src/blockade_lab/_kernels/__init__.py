"""Integration kernels.

The compiled Cython kernel is used when it was built; otherwise the numpy
fallback is imported.  Setting ``BLOCKADE_LAB_PURE_PYTHON=1`` forces the
fallback.
"""

import os

from . import _rk4_py

if os.environ.get("BLOCKADE_LAB_PURE_PYTHON", "") not in ("", "0"):
    rk4_csr = _rk4_py.rk4_csr
    BACKEND = "python"
else:
    try:
        from ._rk4 import rk4_csr
        BACKEND = "cython"
    except ImportError:
        rk4_csr = _rk4_py.rk4_csr
        BACKEND = "python"

__all__ = ["rk4_csr", "BACKEND"]
