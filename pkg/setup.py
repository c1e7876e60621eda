"""Build the optional compiled kernels.

The package works without them (numpy fallback); a failed compile only
prints a warning. In-place build for development:
    python setup.py build_ext --inplace
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, Cython missing, ...
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback", file=sys.stderr)


def extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    compile_args, libraries = ["-O3"], []
    if sys.platform.startswith("linux"):
        # lets gcc vectorise tanh through glibc's libmvec
        compile_args.append("-ffast-math")
        libraries = ["mvec", "m"]
    ext = Extension(
        "hgr.autodiff._lstm_ext",
        ["src/hgr/autodiff/_lstm_ext.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=compile_args,
        libraries=libraries,
    )
    return cythonize([ext], quiet=True)


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
