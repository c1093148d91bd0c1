"""Kernel backend selection.

Prefers the compiled extension, falls back to the numpy twin. Force a
backend with CLOTHKIT_BACKEND=compiled|python (used by parity tests and
the benchmark).
"""

from __future__ import annotations

import os

from . import _kernels_py

_forced = os.environ.get("CLOTHKIT_BACKEND", "").strip().lower()

if _forced == "python":
    _impl = _kernels_py
elif _forced == "compiled":
    from . import _kernels as _impl  # noqa: F401  (raises if not built)
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND_NAME
closest_points = _impl.closest_points
rasterize = _impl.rasterize


def available_backends():
    """Import every buildable backend (for benchmarks/parity tests)."""
    backends = {"python": _kernels_py}
    try:
        from . import _kernels

        backends["compiled"] = _kernels
    except ImportError:
        pass
    return backends
