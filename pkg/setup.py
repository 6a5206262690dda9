"""Build the optional compiled kernel; the package falls back to pure Python without it."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("DISTDYK_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("distdyk._ckernel", ["src/distdyk/_ckernel.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
