"""Build the optional compiled kernels.

The extension is optional: when it fails to build (no compiler, no Cython)
the package still installs and falls back to the pure-Python kernels.
"""

import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("DUALECC_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "dualecc._ckernels",
                ["src/dualecc/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
