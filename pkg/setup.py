"""Build script: compiles the optional native kernel extension.

The extension is marked optional; if Cython or a C compiler is missing the
install proceeds and koopflow falls back to the pure-Python kernels.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("KOOPFLOW_NO_NATIVE") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext = Extension(
            "koopflow._kernels._native",
            ["src/koopflow/_kernels/_native.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext.optional = True
        ext_modules = cythonize([ext], language_level=3)
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
