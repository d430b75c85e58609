"""Build script for the optional compiled kernel extension.

If Cython or a C compiler is unavailable the package still installs and runs
on the numpy fallback in ``fracflow._kernels_py``.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("FRACFLOW_NO_EXT", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext = Extension(
            "fracflow._kernels",
            ["src/fracflow/_kernels.pyx"],
            include_dirs=[numpy.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3", "-fopenmp"],
            extra_link_args=["-fopenmp"],
            optional=True,
        )
        ext_modules = cythonize([ext], language_level=3, quiet=True)

setup(ext_modules=ext_modules)
