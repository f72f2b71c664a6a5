import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernels are optional: if the build fails (no compiler, no
# Cython) the package installs anyway and falls back to the numpy path.
extensions = [
    Extension(
        "siblingshift._pairwise",
        ["src/siblingshift/_pairwise.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
    if cythonize is not None
    else [],
)
