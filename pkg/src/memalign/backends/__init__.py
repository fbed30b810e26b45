"""Kernel backend selection.

The compiled Cython core is preferred when it imports cleanly; otherwise
the NumPy implementation takes over. Both produce bit-identical results.
Set MEMALIGN_BACKEND=python or MEMALIGN_BACKEND=compiled to force one
(the latter raises if the extension is missing).
"""

from __future__ import annotations

import os

from . import numpy_backend

_requested = os.environ.get("MEMALIGN_BACKEND", "").strip().lower()

if _requested not in ("", "python", "compiled"):
    raise ImportError(
        f"MEMALIGN_BACKEND={_requested!r} not recognized; "
        "use 'python' or 'compiled'"
    )

if _requested == "python":
    _impl = numpy_backend
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = numpy_backend
        BACKEND = "python"

cosine_scan = _impl.cosine_scan
topk_desc = _impl.topk_desc

__all__ = ["BACKEND", "cosine_scan", "topk_desc", "numpy_backend"]
