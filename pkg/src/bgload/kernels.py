"""Hot numeric kernels, compiled when possible.

The Cython build (``_ckernels``) is used when it imports; otherwise the
pure-Python twins in ``_kernels_py`` take over. Set ``BGLOAD_PURE_PYTHON=1``
to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("BGLOAD_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

maxmin_share = _impl.maxmin_share
error_at = _impl.error_at
batch_errors = _impl.batch_errors
floor_index = _impl.floor_index
phi_batch = _impl.phi_batch

SQD, MAPE, TADJ_SQD = _kernels_py.SQD, _kernels_py.MAPE, _kernels_py.TADJ_SQD
