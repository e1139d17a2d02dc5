"""Build the optional compiled kernels.

The Cython extension is optional: when Cython or a C compiler is missing the
package installs without it and falls back to the NumPy kernels at import.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("COSPARSE_NILM_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "cosparse_nilm._ckernels",
                    ["src/cosparse_nilm/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    # keep a*b+c unfused so results match the NumPy fallback bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
