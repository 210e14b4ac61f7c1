"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (pure-NumPy fallback kernels are
selected at import time); any failure here degrades to a source-only
install instead of aborting.
"""

import sys

from setuptools import setup


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"cython/numpy unavailable ({exc}); building without compiled kernels",
              file=sys.stderr)
        return []
    try:
        return cythonize(
            ["src/gridadvice/_kernels/_conv.pyx"],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
            include_path=[numpy.get_include()],
        )
    except Exception as exc:  # cythonize failure is non-fatal
        print(f"cythonize failed ({exc}); building without compiled kernels",
              file=sys.stderr)
        return []


kwargs = {}
exts = extensions()
if exts:
    import numpy

    for ext in exts:
        ext.include_dirs.append(numpy.get_include())
    kwargs["ext_modules"] = exts

setup(**kwargs)
