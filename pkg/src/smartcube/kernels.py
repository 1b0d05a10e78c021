"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``SMARTCUBE_KERNELS=python`` to force the fallback.

Convolutions always use the numpy path: its BLAS-backed tensor contraction
beats the compiled direct loops (see ``benchmarks/bench_kernels.py``).
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("SMARTCUBE_KERNELS", "").lower() == "python":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "cython"

conv2d_forward = _pykernels.conv2d_forward
conv2d_backward = _pykernels.conv2d_backward
bilinear_sample = _impl.bilinear_sample
label_components = _impl.label_components
