import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("SEEDBLOCK_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:  # fallback kernel is used at import time
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "seedblock._xorcore",
                    ["src/seedblock/_xorcore.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
