from setuptools import Extension, setup

import numpy as np
from Cython.Build import cythonize

ext_modules = cythonize(
    [
        Extension(
            "netadjust.kernels._cykernels",
            ["src/netadjust/kernels/_cykernels.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ],
    language_level=3,
)

setup(ext_modules=ext_modules)
