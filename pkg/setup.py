"""Build script: compiles the gradient-ascent kernel when Cython is available.

The package works without the extension (a NumPy fallback is selected at
import time), so any build failure here degrades to the pure-Python path
instead of aborting the install. Set STABLEADV_SKIP_CYTHON=1 to force the
pure-Python build.
"""
import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("STABLEADV_SKIP_CYTHON") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "stableadv._ascent_cy",
                    ["src/stableadv/_ascent_cy.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except Exception as exc:  # pragma: no cover - build-environment dependent
        sys.stderr.write(f"stableadv: skipping Cython kernel build ({exc})\n")
        ext_modules = []

setup(ext_modules=ext_modules)
