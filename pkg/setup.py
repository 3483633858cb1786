"""Build the optional Cython event-loop kernel.

The package works without it; ``idlewave.engine`` falls back to the
pure-Python loop when ``idlewave._kernel`` cannot be imported.

    pip install -e . --no-build-isolation
    python setup.py build_ext --inplace
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("IDLEWAVE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "idlewave._kernel",
                    ["src/idlewave/_kernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
