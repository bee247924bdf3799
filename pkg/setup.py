import os

from setuptools import Extension, setup

# The compiled kernels are optional: the package falls back to the numpy
# implementation when the extension is absent (DENSEHAR_NO_EXT=1 skips the
# build entirely, e.g. on boxes without a C toolchain).
ext_modules = []
if os.environ.get("DENSEHAR_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "densehar.engine._ckernels",
                    ["src/densehar/engine/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
