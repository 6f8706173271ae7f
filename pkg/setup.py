"""Build script: compiles the optional Cython step kernel.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile should not block installation. Set
INCARSIM_PURE=1 to skip the extension build entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("INCARSIM_PURE"):
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "incarsim.engine._kernel",
                ["src/incarsim/engine/_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
