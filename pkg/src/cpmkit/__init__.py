"""Construction progress monitoring for window installations.

Modules: :mod:`raster` (images and pixel ops), :mod:`annotations` (label
format and dataset layout), :mod:`augment`, :mod:`detmetrics`,
:mod:`progress` (checkpoint state machine), :mod:`reconcile` (outdoor QR
check against the target list) and :mod:`cli`.
"""

from ._ext import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
