"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure NumPy implementation is
selected at import time), so a failed compile only costs speed.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "pathsmc.backends._core",
        sources=["src/pathsmc/backends/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-fopenmp"],
        extra_link_args=["-fopenmp"],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
