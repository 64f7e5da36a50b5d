"""Build script for the compiled kernel core.

The extension is optional at runtime: if the build is skipped or fails the
package falls back to the pure-numpy backend with identical numerics.
`-ffp-contract=off` matters — the kernels promise separately-rounded
multiply and add so results are bit-identical to the fallback.
"""
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "gvlm.engine._kernels",
        sources=["src/gvlm/engine/_kernels.pyx"],
        extra_compile_args=["-O3", "-march=native", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": 3,
        },
    )
)
