"""Build script: compiles the optional simulation kernel extension.

The package works without the extension (a pure-Python kernel is selected
at import time); compilation failures therefore downgrade to a warning
instead of aborting the install.
"""

import sys

from setuptools import setup

EXT_SOURCE = "src/deskpong/sim/_speedups.pyx"


def extension_modules():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError as exc:
        print(f"deskpong: building without compiled kernels ({exc})", file=sys.stderr)
        return []
    return cythonize(
        [
            Extension(
                "deskpong.sim._speedups",
                [EXT_SOURCE],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off keeps C arithmetic bit-identical to the
                # pure-Python kernel (no FMA contraction).
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )


setup(ext_modules=extension_modules())
