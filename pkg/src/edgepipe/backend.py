"""Kernel backend selection.

Prefers the compiled extension; falls back to the pure-Python loop when the
extension is not built or EDGEPIPE_FORCE_PYTHON=1 is set.
"""

from __future__ import annotations

import os

if os.environ.get("EDGEPIPE_FORCE_PYTHON") == "1":
    from . import _kernel_py as _impl
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernel_py as _impl

sgd_trace = _impl.sgd_trace
BACKEND: str = _impl.BACKEND
