"""Build script for the optional compiled clustering kernel.

The package works without a compiler: if Cython (or a C toolchain) is
missing, the extension is skipped and dialogforge falls back to the pure
numpy kernel at import time.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "dialogforge._kernels._greedy",
                ["src/dialogforge/_kernels/_greedy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    print("Cython or numpy not available at build time; "
          "building without the compiled kernel.", file=sys.stderr)

setup(ext_modules=ext_modules)
