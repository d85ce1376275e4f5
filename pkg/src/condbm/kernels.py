"""Backend selection for the path kernels.

The compiled kernels are used when the extension is importable; setting
``CONDBM_PURE_PYTHON=1`` forces the pure-Python reference. Both backends give
identical results for identical generator states.
"""
import os

from . import _pykernels

try:
    if os.environ.get("CONDBM_PURE_PYTHON"):
        raise ImportError("pure-Python backend requested")
    from . import _ckernels as _backend
    BACKEND = "cython"
except ImportError:
    _backend = _pykernels
    BACKEND = "python"

OK, EXIT_FAIL, NONFINITE, EXHAUSTED = 0, 1, 2, 4
NAMES = ("em_halfline", "em_wedge", "em_theta", "reject_halfline", "reject_pair", "coalesce")


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or None for the default)."""
    if name is None:
        return _backend
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


em_halfline = _backend.em_halfline
em_wedge = _backend.em_wedge
em_theta = _backend.em_theta
reject_halfline = _backend.reject_halfline
reject_pair = _backend.reject_pair
coalesce = _backend.coalesce
