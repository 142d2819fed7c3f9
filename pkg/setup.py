from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "pmekf._kernels",
                ["src/pmekf/_kernels.pyx"],
                # fp-contract off keeps results aligned with the pure-Python twin
                extra_compile_args=["-O3", "-ffp-contract=off"],
                language="c",
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython: install pure-Python only; pmekf.backend falls back at import.
    ext_modules = []

setup(ext_modules=ext_modules)
