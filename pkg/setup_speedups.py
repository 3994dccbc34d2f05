# Optional compiled kernels.  Build in place with:
#   python setup_speedups.py build_ext --inplace
# The package falls back to the pure numpy kernels when this is not built.
import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "wfdual._kernels._speedups",
    sources=["src/wfdual/_kernels/_speedups.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(
    name="wfdual-speedups",
    ext_modules=cythonize([ext], language_level="3"),
    package_dir={"": "src"},
)
