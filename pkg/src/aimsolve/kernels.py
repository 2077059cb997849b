"""Kernel dispatch: compiled extension when built, numpy otherwise.

Set ``AIMSOLVE_PURE_PYTHON=1`` to force the numpy versions.
"""

import os

from . import _kernels_py

BACKEND = "python"
cauchy2d = _kernels_py.cauchy2d
level_values = _kernels_py.level_values

if os.environ.get("AIMSOLVE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        BACKEND = "compiled"
        cauchy2d = _kernels.cauchy2d
        level_values = _kernels.level_values
