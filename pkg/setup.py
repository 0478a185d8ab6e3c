"""Build hook for the optional compiled kernels.

The package works without them: if Cython or a compiler is unavailable the
extension is skipped and ``mf2pop._kernels`` falls back to numpy.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("MF2POP_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "mf2pop._kernels._ext",
                    ["src/mf2pop/_kernels/_ext.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
