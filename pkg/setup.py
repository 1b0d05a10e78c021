"""Build the optional Cython kernel extension.

The extension is marked optional: when it fails to compile the package still
installs and ``smartcube.kernels`` falls back to the numpy implementation.
"""
import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "smartcube._ckernels",
        ["src/smartcube/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        # no FMA contraction: keeps results bit-identical to the numpy fallback
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
