import os

from setuptools import setup

# The compiled propagation core is optional: without it the package falls
# back to the pure-numpy backend at import time.  Set SPLITLEARN_NO_EXT=1
# to skip the build entirely.
ext_modules = []
if os.environ.get("SPLITLEARN_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext = Extension(
            "splitlearn.engine._fftw_core",
            ["src/splitlearn/engine/_fftw_core.pyx"],
            libraries=["fftw3"],
            extra_compile_args=["-O3"],
            optional=True,
        )
        ext_modules = cythonize([ext], language_level="3")
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
