import os

import numpy as np
from setuptools import Extension, setup

# The extension is optional: without Cython or a compiler the package
# still installs and runs on the numpy fallback kernels.
ext_modules = []
if not os.environ.get("SPECTRALNET_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "spectralnet._core",
                    ["src/spectralnet/_core.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level="3",
        )

setup(ext_modules=ext_modules)
