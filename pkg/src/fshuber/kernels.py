"""Backend selection for the convolution kernels.

The compiled extension is used when it imports; setting the environment
variable ``FSHUBER_PURE_PYTHON=1`` forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _dp_py

if os.environ.get("FSHUBER_PURE_PYTHON", "") not in ("", "0"):
    _impl = _dp_py
    BACKEND = "python"
else:
    try:
        from . import _dp as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _dp_py
        BACKEND = "python"

dp_forward = _impl.dp_forward
dp_forward_grad = _impl.dp_forward_grad
dp_forward_batch = _impl.dp_forward_batch

__all__ = ["BACKEND", "dp_forward", "dp_forward_grad", "dp_forward_batch"]
