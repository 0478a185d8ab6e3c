"""Time-step kernels with a compiled core and a numpy fallback.

The compiled extension is used when importable; set ``MF2POP_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import _pure

_FORCE_PURE = os.environ.get("MF2POP_PURE_PYTHON", "").lower() in ("1", "true", "yes")

try:
    from . import _ext
except ImportError:  # extension not built
    _ext = None

if _ext is not None and not _FORCE_PURE:
    _impl = _ext
    BACKEND = "cython"
else:
    _impl = _pure
    BACKEND = "python"

solve_tridiagonal = _impl.solve_tridiagonal
fp_step = _impl.fp_step
hjb_step = _impl.hjb_step
em_step = _impl.em_step


def available_backends():
    """Mapping of backend name to kernel module for every importable backend."""
    backends = {"python": _pure}
    if _ext is not None:
        backends["cython"] = _ext
    return backends
