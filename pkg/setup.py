"""Builds the optional Cython kernel extension.

The extension is a speedup only; if the build fails the package falls back
to the pure-numpy backend at import time.
"""

from setuptools import setup, Extension

try:
    from Cython.Build import cythonize
    import numpy

    ext_modules = cythonize(
        [
            Extension(
                "fedarena.backends._kernels",
                ["src/fedarena/backends/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-march=native"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
