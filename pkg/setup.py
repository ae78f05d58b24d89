import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("WEYLSPEC_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "weylspec._kernels",
                    ["src/weylspec/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # pure-python kernels are selected at import time when the
        # extension is missing
        ext_modules = []

setup(ext_modules=ext_modules)
