"""Select the kernel backend at import time.

The compiled extension is preferred when importable; setting the environment
variable ``PROJDLM_PURE_PYTHON=1`` forces the numpy fallback (useful for
debugging and for the backend benchmark).
"""

import os

from . import _kernels_py

if os.environ.get("PROJDLM_PURE_PYTHON", "").strip() not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

kernels_py = _kernels_py


def backend_name():
    """Name of the active kernel backend: 'cython' or 'python'."""
    return kernels.BACKEND_NAME
