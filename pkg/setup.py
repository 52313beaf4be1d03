"""Build script: compiles the optional accelerator extension when Cython is present.

The package is fully functional without the extension (pure numpy fallbacks
are selected at import time); the extension only speeds up the hot kernels.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/vpreval/_core.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
