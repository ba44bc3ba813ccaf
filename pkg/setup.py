"""Build script for the optional compiled kernels.

    python setup.py build_ext --inplace

When Cython or a C compiler is missing the package installs without the
extension and the numpy kernels are used.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("NTN_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("ntndiff._ckernels", ["src/ntndiff/_ckernels.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
