"""Kernel backend selection.

The compiled Cython core is used when it was built and ``CPMKIT_NO_EXT`` is
unset; otherwise the numpy implementations in ``_raster_py`` take over.
Both expose ``box_blur``, ``laplacian_sums`` and ``warp_nearest``.
"""

import os
from types import ModuleType

from . import _raster_py

try:
    from . import _raster_core as _compiled
except ImportError:
    _compiled = None

if _compiled is not None and not os.environ.get("CPMKIT_NO_EXT"):
    kernels: ModuleType = _compiled
    BACKEND = "cython"
else:
    kernels = _raster_py
    BACKEND = "python"


def available_backends() -> dict[str, ModuleType]:
    backends = {"python": _raster_py}
    if _compiled is not None:
        backends["cython"] = _compiled
    return backends
