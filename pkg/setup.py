"""Build hook for the optional Cython core.

The package works without it: ``mixlab._backend`` falls back to the numpy
implementation when ``mixlab._kernels`` cannot be imported.  Set
``MIXLAB_NO_EXT=1`` to skip compilation entirely.
"""
import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("MIXLAB_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "mixlab._kernels",
        ["src/mixlab/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=_extensions())
