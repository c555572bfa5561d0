import sys

from setuptools import setup

# The compiled kernel is optional. A missing compiler or Cython must not
# break installation; stagechain.backend falls back to the numpy kernel.
ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "stagechain._kernel_cy",
                ["src/stagechain/_kernel_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover
    print(f"stagechain: building without compiled kernel ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
