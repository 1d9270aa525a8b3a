"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when it is
missing or when ``SPECTRALNET_PURE`` is set to a non-empty, non-"0" value.
``BACKEND`` names whichever was picked.
"""

import os

from . import _fallback

_force_pure = os.environ.get("SPECTRALNET_PURE", "") not in ("", "0")

try:
    if _force_pure:
        raise ImportError("pure backend requested")
    from . import _core as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _fallback
    BACKEND = "python"

cholesky = _impl.cholesky
jacobi_eigh = _impl.jacobi_eigh
knn_select = _impl.knn_select
