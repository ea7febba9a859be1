import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps the compiled kernel bit-identical to the numpy
# fallback (no FMA contraction of a*b+c).
setup(
    ext_modules=cythonize(
        [
            Extension(
                "skelfit._ccd_kernel",
                ["src/skelfit/_ccd_kernel.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
)
