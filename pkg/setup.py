"""Build hook for the optional compiled kernel extension.

The package works without the extension: ``adann.backend`` falls back to
the NumPy reference kernels when ``adann._core`` cannot be imported.
"""

import sys

from setuptools import setup


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError as exc:  # pragma: no cover - build-environment dependent
        print(f"adann: skipping compiled kernels ({exc}); NumPy fallback will be used",
              file=sys.stderr)
        return []
    ext = Extension(
        "adann._core",
        ["src/adann/_core.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
