"""Select the kernel implementation at import time.

The compiled extension is preferred. Setting ``DUALECC_PURE_PYTHON=1`` forces
the NumPy fallback, which is also used whenever the extension is missing.
"""

from __future__ import annotations

import os

from dualecc import _pykernels

if os.environ.get("DUALECC_PURE_PYTHON", "").strip() not in ("", "0"):
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from dualecc import _ckernels as kernels  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        kernels = _pykernels
        BACKEND = "python"


def available_backends() -> dict:
    """Map backend name to kernel module for every importable backend."""
    out = {"python": _pykernels}
    try:
        from dualecc import _ckernels

        out["cython"] = _ckernels
    except ImportError:  # pragma: no cover
        pass
    return out
