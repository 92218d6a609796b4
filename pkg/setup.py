"""Build script for the optional compiled inner-loop kernel.

The package is pure Python; the Cython extension only accelerates the dense
QCQP subproblem loop.  If the extension cannot be built, installation still
succeeds and the numpy fallback is used at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "ialm._qcqp_kernel",
        ["src/ialm/_qcqp_kernel.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    pass

setup(ext_modules=ext_modules)
