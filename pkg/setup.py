import os

import numpy as np
from setuptools import Extension, setup

# CPMKIT_NO_EXT=1 skips the compiled core; the package then runs on the numpy fallback.
if os.environ.get("CPMKIT_NO_EXT"):
    ext_modules = []
else:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "cpmkit._ext._raster_core",
                ["src/cpmkit/_ext/_raster_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no FMA contraction: both backends must round identically
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
