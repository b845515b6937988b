"""Selects the gradient-ascent kernel at import time.

The compiled Cython kernel is preferred; the pure-NumPy fallback is used
when the extension is missing or STABLEADV_FORCE_PYTHON=1 is set. Both
implement identical semantics (parity is enforced by the test suite), so
a given install behaves consistently regardless of which one loads.
"""
from __future__ import annotations

import os

from . import _ascent_py

if os.environ.get("STABLEADV_FORCE_PYTHON") == "1":
    _impl = _ascent_py
else:
    try:
        from . import _ascent_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _ascent_py

ascend_batch = _impl.ascend_batch
KERNEL_NAME = _impl.KERNEL_NAME
