"""Build the optional Cython kernels.

The package works without them: ``smallgroup_lab.kernels`` falls back to
numpy implementations when the extension is missing. Set
``SMALLGROUP_LAB_NO_EXT=1`` to skip compilation entirely.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("SMALLGROUP_LAB_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "smallgroup_lab._ckernels",
                    ["src/smallgroup_lab/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
        )

setup(ext_modules=ext_modules)
