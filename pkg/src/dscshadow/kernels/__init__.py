"""Kernel backend selection.

The hot inner loops (conv2d and the directional recurrent scan) exist twice:
a Cython extension (``_native``) and a pure NumPy fallback (``_numpy``). The
compiled backend is used when importable; set DSC_KERNELS=python or
DSC_KERNELS=native to force a choice. ``benchmarks/bench_kernels.py``
compares the two.
"""

import os

_choice = os.environ.get("DSC_KERNELS", "auto")

if _choice == "python":
    from . import _numpy as _impl
elif _choice == "native":
    from . import _native as _impl  # type: ignore[no-redef]
elif _choice == "auto":
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import _numpy as _impl  # type: ignore[no-redef]
else:
    raise RuntimeError(f"DSC_KERNELS must be auto, native or python, got {_choice!r}")

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
scan_forward = _impl.scan_forward
scan_backward = _impl.scan_backward


def backend_name() -> str:
    """Name of the active kernel backend ("native" or "python")."""
    return _impl.BACKEND
