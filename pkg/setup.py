"""Build script: compiles the raster kernel extension when a toolchain is present.

The package works without the extension (pvmap.kernels falls back to the
vectorized numpy backend), so any failure here downgrades to a pure install
instead of aborting.
"""

import sys

from setuptools import setup
from setuptools.errors import CCompilerError, ExecError, PlatformError

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:
    setup()
    sys.exit(0)

# -ffp-contract=off: the compiled kernels must round exactly like the numpy
# fallback, so fused multiply-adds are disabled.
extensions = cythonize(
    [
        Extension(
            "pvmap.kernels._compiled",
            ["src/pvmap/kernels/_compiled.pyx"],
            include_dirs=[numpy.get_include()],
            extra_compile_args=["-O2", "-ffp-contract=off"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ],
    compiler_directives={
        "language_level": 3,
        "boundscheck": False,
        "wraparound": False,
        "cdivision": True,
    },
)

try:
    setup(ext_modules=extensions)
except (CCompilerError, ExecError, PlatformError):
    setup()
