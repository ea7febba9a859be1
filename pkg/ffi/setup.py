from setuptools import Extension, setup

# The extension is a plain C shared library loaded with ctypes (it exports
# skelfit_v1_* symbols, not a Python module). -ffp-contract=off keeps the
# arithmetic bit-identical to the in-process kernels.
setup(
    ext_modules=[
        Extension(
            "skelfit_ffi._native",
            ["csrc/skelfit_ffi.c"],
            extra_compile_args=["-O3", "-ffp-contract=off"],
        )
    ]
)
