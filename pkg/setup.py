"""Builds the optional Cython scoring kernel.

The package works without it: claimgate.retrieval.kernels falls back to the
pure-Python implementation when the extension is missing.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    import numpy as np
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "claimgate.retrieval._score_cy",
                ["src/claimgate/retrieval/_score_cy.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"claimgate: skipping Cython kernel build ({exc}); pure-Python fallback will be used")

setup(ext_modules=ext_modules)
