"""Build script for the optional compiled kernels.

The package works without the extension: raremeta.numerics falls back to
pure-Python implementations of the same routines when the compiled module
is absent (or when RAREMETA_PURE_PYTHON=1 is set).
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - source dists without Cython
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "raremeta.numerics._ckernels",
                ["src/raremeta/numerics/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
    for ext in extensions:
        ext.optional = True

setup(ext_modules=extensions)
