import os

import numpy
from setuptools import Extension, setup

# Set DYNCAL_NO_EXT=1 to install without compiling; the NumPy kernel is used.
ext_modules = []
if not os.environ.get("DYNCAL_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "dyncal.recommenders._bpr_kernel",
                sources=["src/dyncal/recommenders/_bpr_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                libraries=["m"] if os.name == "posix" else [],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
