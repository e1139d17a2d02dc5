"""Select the compiled kernels when available.

Set ``COSPARSE_NILM_PURE=1`` to force the NumPy fallback.
"""
import os

from . import _pykernels

kernels = _pykernels
name = "numpy"

if os.environ.get("COSPARSE_NILM_PURE") != "1":
    try:
        from . import _ckernels as kernels  # noqa: F811
        name = "cython"
    except ImportError:
        pass
