import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; kernels fall back at import
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("CONDBM_NO_EXT"):
    random_lib = os.path.join(os.path.dirname(np.__file__), "random", "lib")
    ext_modules = cythonize(
        [
            Extension(
                "condbm._ckernels",
                ["src/condbm/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                library_dirs=[random_lib],
                libraries=["npyrandom", "m"],
                # no FMA contraction: keeps results bit-identical to the Python kernels
                extra_compile_args=["-O2", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
