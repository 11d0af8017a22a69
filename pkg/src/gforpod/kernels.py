"""Backend selection for the ODE kernels.

The compiled extension is used when it imports; otherwise the pure-Python
reference is used.  Set ``GFORPOD_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_impl = _kernels_py
if os.environ.get("GFORPOD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND

_INT_ARGS = ("bus_off", "br_from", "br_to", "br_off", "src_bus", "src_off", "sg_i", "gf_i")


def available_backends() -> dict[str, type]:
    out = {"python": _kernels_py.Kernel}
    try:
        from . import _ckernels
        out["cython"] = _ckernels.Kernel
    except ImportError:
        pass
    return out


def make_kernel(arrays: dict, n: int, wb: float, backend: str | None = None):
    """Build a kernel over packed arrays.

    Integer arrays must be ``np.intc`` and float arrays C-contiguous
    ``float64`` so both backends share them without copying; in-place edits
    then reach the kernel (call ``refresh()`` afterwards).
    """
    for k, a in arrays.items():
        want = np.intc if k in _INT_ARGS else np.float64
        if a.dtype != want or not a.flags.c_contiguous:
            raise TypeError(f"kernel array {k!r} must be C-contiguous {np.dtype(want).name}")
    cls = available_backends()[backend] if backend else _impl.Kernel
    return cls(n, wb, **arrays)
