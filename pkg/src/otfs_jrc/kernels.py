"""Select the compiled MP_G kernel when available, else the numpy one.

Set OTFS_JRC_PURE_PYTHON=1 to force the fallback.
"""

import os

from . import _kernels_py as fallback

compiled = None
if os.environ.get("OTFS_JRC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

backend = compiled if compiled is not None else fallback
BACKEND_NAME = "cython" if compiled is not None else "numpy"


def get_backend(name=None):
    if name in (None, "auto"):
        return backend
    if name == "numpy":
        return fallback
    if name == "cython":
        if compiled is None:
            raise ImportError("compiled kernels are not built")
        return compiled
    raise ValueError(f"unknown kernel backend {name!r}")
