"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time), so any compiler or Cython failure downgrades to a pure-Python
install instead of aborting.
"""

import sys

from setuptools import setup

ext_modules = []
cmdclass = {}

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension
    from setuptools.command.build_ext import build_ext

    class optional_build_ext(build_ext):
        """build_ext that downgrades compilation failure to a warning."""

        def run(self):
            try:
                super().run()
            except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
                sys.stderr.write(f"warning: extension build skipped: {exc}\n")

        def build_extension(self, ext):
            try:
                super().build_extension(ext)
            except Exception as exc:  # pragma: no cover
                sys.stderr.write(f"warning: building {ext.name} skipped: {exc}\n")

    ext_modules = cythonize(
        [
            Extension(
                "panelboot._kernels",
                ["src/panelboot/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
    cmdclass = {"build_ext": optional_build_ext}
except Exception as exc:  # pragma: no cover
    sys.stderr.write(f"warning: Cython unavailable, pure-Python install: {exc}\n")

setup(ext_modules=ext_modules, cmdclass=cmdclass)
