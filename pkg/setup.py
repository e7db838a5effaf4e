import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("CTXRANK_PURE_PYTHON"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("ctxrank._kernels", ["src/ctxrank/_kernels.pyx"],
                       include_dirs=[np.get_include()])],
            language_level=3,
        )

setup(ext_modules=ext_modules)
