"""Build hook for the optional compiled kernels.

The extension is optional: when Cython or a C compiler is missing the
package installs without it and falls back to the pure-Python kernels.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("prepressure._kernels", ["src/prepressure/_kernels.pyx"],
                   include_dirs=[numpy.get_include()], optional=True)],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
