# Builds the compiled kernel backend.  The package works without it (a
# numpy fallback is selected at import), so the extension is optional.
import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

ext_modules = [
    Extension(
        "corrdepth.kernels._ckernels",
        ["src/corrdepth/kernels/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        # -ffp-contract=off: the kernels promise a fixed per-element
        # accumulation order; FMA contraction would change rounding.
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(ext_modules=cythonize(ext_modules, language_level=3))
