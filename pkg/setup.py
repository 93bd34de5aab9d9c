import os

from setuptools import setup

ext_modules = []
if os.environ.get("SCENEGRID_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "scenegrid.kernels._geom",
                    ["src/scenegrid/kernels/_geom.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # no Cython at build time: the pure-Python kernels are used
        ext_modules = []

setup(ext_modules=ext_modules)
