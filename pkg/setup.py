"""Build the compiled simulation kernels.

The package works without the extension (a pure-Python fallback is selected
at import); the extension is what makes the large Monte Carlo runs feasible.
"""
import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "vertgame.engine._kernels",
        ["src/vertgame/engine/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
