"""Hot evaluation kernels: compiled extension when built, numpy otherwise.

Set ``GANENS_PURE_PYTHON=1`` to force the numpy implementation.
"""
import os

from . import fallback

BACKEND = "python"
kernels = fallback

if os.environ.get("GANENS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as kernels  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def get_kernels(name=None):
    """Return the kernel module for ``name`` ('cython', 'python') or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return fallback
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
