"""Build hooks: compile the simulation kernel when Cython and a C compiler
are available, otherwise install with the numpy fallback only."""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "kellycap._engine._ckernels",
                ["src/kellycap/_engine/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
