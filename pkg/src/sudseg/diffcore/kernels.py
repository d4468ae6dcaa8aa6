"""Kernel backend selection.

The compiled extension is used when importable; set SUDSEG_KERNELS=numpy to
force the fallback (the benchmark and the cross-backend tests do this
explicitly by importing both modules).
"""

from __future__ import annotations

import os

from . import _kernels_np

_forced = os.environ.get("SUDSEG_KERNELS", "auto").lower()

if _forced in ("auto", "compiled"):
    try:
        from . import _kernels_cy as _impl

        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        _impl = _kernels_np
        BACKEND = "numpy"
elif _forced == "numpy":
    _impl = _kernels_np
    BACKEND = "numpy"
else:
    raise ValueError(f"SUDSEG_KERNELS must be auto|compiled|numpy, got {_forced!r}")

im2col = _impl.im2col
col2im = _impl.col2im
maxpool2 = _impl.maxpool2
maxpool2_backward = _impl.maxpool2_backward
max_unpool2 = _impl.max_unpool2
max_unpool2_backward = _impl.max_unpool2_backward
