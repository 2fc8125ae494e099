"""Step-kernel selection.

The compiled kernel is preferred; the pure-Python twin is the fallback.
Set DESKPONG_PURE=1 to force the fallback (used by the parity tests and
the kernel benchmark).
"""

from __future__ import annotations

import os

if os.environ.get("DESKPONG_PURE") == "1":
    from . import _pystep as kernel
else:
    try:
        from . import _speedups as kernel  # type: ignore[no-redef]
    except ImportError:
        from . import _pystep as kernel  # type: ignore[no-redef]

KERNEL_NAME = "compiled" if kernel.COMPILED else "pure"


def get_kernel(pure: bool = False):
    """Return the active kernel module (or explicitly the pure one)."""
    if pure:
        from . import _pystep

        return _pystep
    return kernel
