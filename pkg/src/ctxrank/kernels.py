"""Hot kernels: the compiled extension when available, numpy otherwise.

Set ``CTXRANK_PURE_PYTHON=1`` to force the numpy versions.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("CTXRANK_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

list_probs = _impl.list_probs
perm_values = _impl.perm_values
auc = _impl.auc
