"""Kernel backend selection.

The compiled extension is used when it imports; setting ``FSQ_PURE_PYTHON=1``
forces the numpy fallback. ``BACKEND`` names the active one.
"""

import os

from fsq import _kernels_py

if os.environ.get("FSQ_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from fsq import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

forward = _impl.forward
backward = _impl.backward
loss_grad = _impl.loss_grad
adam_update = _impl.adam_update
sumtree_update = _impl.sumtree_update
sumtree_find = _impl.sumtree_find


def available_backends():
    backends = {"python": _kernels_py}
    try:
        from fsq import _kernels

        backends["cython"] = _kernels
    except ImportError:
        pass
    return backends
