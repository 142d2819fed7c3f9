"""Numeric backend selection: compiled extension when available, else Python.

Set PMEKF_PURE_PYTHON=1 to force the pure-Python kernels (useful for
debugging and for the backend benchmark).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("PMEKF_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.BACKEND_NAME


def get_kernels(pure_python: bool | None = None):
    """Return the kernel module; pure_python overrides the import-time choice."""
    if pure_python is None:
        return kernels
    if pure_python:
        return _kernels_py
    from . import _kernels  # noqa: F401  (raises if the extension is missing)
    return _kernels
