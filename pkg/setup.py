import os

import numpy
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("DESKVLN_SKIP_BUILD"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "deskvln._kernels._core",
                ["src/deskvln/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off: no FMA contraction, the pure fallback must
                # produce bit-identical floats
                extra_compile_args=["-O2", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
