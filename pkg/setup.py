import os

import numpy
from setuptools import Extension, setup

PYX = "src/cecflow/_kernels/_ckernels.pyx"

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None and os.path.exists(PYX):
    ext_modules = cythonize(
        [
            Extension(
                "cecflow._kernels._ckernels",
                [PYX],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    # The package falls back to the pure-Python kernels at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
