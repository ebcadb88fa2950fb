"""Builds the compiled rasterization kernels.

The extension is optional: if the build is unavailable the package falls
back to the NumPy kernels at import time. FP contraction is disabled so
compiled and NumPy rasters are bitwise identical.
"""
from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "eyesim.renderer._kernels",
                ["src/eyesim/renderer/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
