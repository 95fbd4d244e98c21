"""Kernel backend selection.

The compiled extension is used when importable; set ``SKLAB_BACKEND=python``
to force the NumPy fallback.
"""
import os

from . import _fallback as fallback

try:
    from . import _core as compiled
except ImportError:  # extension not built
    compiled = None

if os.environ.get("SKLAB_BACKEND", "").lower() == "python" or compiled is None:
    backend = fallback
    BACKEND_NAME = "python"
else:
    backend = compiled
    BACKEND_NAME = "compiled"


def get_backend(name=None):
    """Return the kernel module for ``name`` ('compiled', 'python' or None for the default)."""
    if name is None:
        return backend
    if name == "python":
        return fallback
    if name == "compiled":
        if compiled is None:
            raise ImportError("sklab compiled kernels are not built")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
