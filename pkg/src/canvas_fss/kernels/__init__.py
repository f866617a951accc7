"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The active path is chosen once at import time from ``CANVAS_FSS_NUMBA``:
``auto`` (default) uses numba when it imports cleanly, ``1`` requires it,
``0`` forces the numpy fallback. ``benchmarks/bench_kernels.py`` compares
the two.
"""
from __future__ import annotations

import os

from . import numpy_impl

_MODE = os.environ.get("CANVAS_FSS_NUMBA", "auto").strip().lower()

if _MODE in ("0", "off", "false", "numpy"):
    _impl = numpy_impl
    ACTIVE_PATH = "numpy"
else:
    try:
        from . import numba_impl as _impl  # noqa: F401

        ACTIVE_PATH = "numba"
    except ImportError:
        if _MODE in ("1", "on", "true", "numba"):
            raise
        _impl = numpy_impl
        ACTIVE_PATH = "numpy"

rle_decode_flat = _impl.rle_decode_flat
rle_encode_flat = _impl.rle_encode_flat
bilinear_rgb = _impl.bilinear_rgb
nearest_mask = _impl.nearest_mask
confusion_counts = _impl.confusion_counts
polygon_mask = _impl.polygon_mask

__all__ = [
    "ACTIVE_PATH",
    "bilinear_rgb",
    "confusion_counts",
    "nearest_mask",
    "numpy_impl",
    "polygon_mask",
    "rle_decode_flat",
    "rle_encode_flat",
]
