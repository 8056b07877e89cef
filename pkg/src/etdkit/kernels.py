"""Pointwise kernels: compiled extension when built, NumPy otherwise.

Set ``ETDKIT_PURE_PYTHON=1`` to force the NumPy versions.
"""
import os

from . import _kernels_py as python_backend

compiled_backend = None
if os.environ.get("ETDKIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:
        compiled_backend = None

_active = compiled_backend or python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

sh_nonlinearity = _active.sh_nonlinearity
sh_jacobian = _active.sh_jacobian
huber_tv = _active.huber_tv
