import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# The extension only moves data (im2col, col2im, pooling); all arithmetic
# stays in BLAS so results are identical with or without it.  optional=True
# keeps the install usable on boxes without a C compiler.
ext = Extension(
    "mlgl.kernels._ckernels",
    ["src/mlgl/kernels/_ckernels.pyx"],
    include_dirs=[numpy.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    extra_compile_args=["-O3"],
    optional=True,
)

setup(ext_modules=cythonize([ext], language_level=3))
