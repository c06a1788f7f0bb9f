import os
import sys

import numpy as np
from setuptools import Extension, setup

# The compiled core is optional: without Cython or a C compiler the package
# still installs and runs on the numpy fallback in revsph._pykernels.
ext_modules = []
if os.environ.get("REVSPH_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("Cython not found, building without the compiled core", file=sys.stderr)
    else:
        extensions = [
            Extension(
                "revsph._ckernels",
                ["src/revsph/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # No -ffast-math / -march=native: results must be bitwise equal to
                # the numpy fallback, so no reassociation and no FMA contraction.
                extra_compile_args=["-O2", "-fopenmp", "-ffp-contract=off"],
                extra_link_args=["-fopenmp"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
