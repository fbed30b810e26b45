import os

import numpy
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("MEMALIGN_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            Extension(
                "memalign.backends._ckernels",
                ["src/memalign/backends/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                # float ops must stay in source order: no FMA contraction,
                # no fast-math, so the compiled scan matches the NumPy
                # fallback bit for bit.
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        )
    except ImportError:
        pass  # pure-Python fallback is selected at import time

setup(ext_modules=ext_modules)
