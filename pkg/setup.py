import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SWFF_PURE_PYTHON") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("swff._kernel", ["src/swff/_kernel.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
