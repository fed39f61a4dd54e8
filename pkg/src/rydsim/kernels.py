"""Backend selection for the GRAPE sweep kernel.

The compiled extension is used when importable; setting
``RYDSIM_PURE_PYTHON=1`` forces the numpy fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("RYDSIM_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

grape_sweep = _impl.grape_sweep
python_grape_sweep = _kernels_py.grape_sweep


def compiled_grape_sweep():
    """The compiled sweep, or None when the extension is not built."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels.grape_sweep
