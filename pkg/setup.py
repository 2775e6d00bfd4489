"""Build script for the compiled grid-kernel extension.

The extension is optional: if Cython or a C compiler is unavailable the
package falls back to the numpy kernels in gcnkan.kernels.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "gcnkan._grid_ext",
                ["src/gcnkan/_grid_ext.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
