"""Build script: compiles the HEOM core extension when Cython is available.

The package is fully functional without the extension (a vectorized numpy
backend is selected at import time), so a failed extension build only costs
speed, never features.
"""

import warnings

from setuptools import setup


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError as exc:
        warnings.warn(f"building without compiled HEOM core: {exc}")
        return []
    ext = Extension(
        "qprobe._heom_core",
        sources=["src/qprobe/_heom_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions())
