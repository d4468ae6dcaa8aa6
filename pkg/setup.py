"""Build hook for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); building it just makes the conv/pool inner loops faster.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "sudseg.diffcore._kernels_cy",
                sources=["src/sudseg/diffcore/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # no cython / no compiler: pure-python install
    print(f"sudseg: skipping compiled kernels ({exc})")

setup(ext_modules=ext_modules)
