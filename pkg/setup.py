"""Build script: compiles the optional fast featurizer extension.

The package works without the extension (pure-Python fallback is selected
at import time), so a failed compile only costs speed.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "belforge._fastfeat",
                sources=["src/belforge/_fastfeat.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
