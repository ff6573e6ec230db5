"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``TSVSHIELD_DISABLE_NUMBA=1``
to force the numpy versions (also used automatically when numba is missing).
Both implementations stay importable as ``kernels.numpy_impl`` and
``kernels.numba_impl`` (the latter is ``None`` without numba).
"""
import os

from . import _numpy as numpy_impl

_disabled = os.environ.get("TSVSHIELD_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    from . import _numba as numba_impl
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None

if numba_impl is not None and not _disabled:
    BACKEND = "numba"
    _active = numba_impl
else:
    BACKEND = "numpy"
    _active = numpy_impl

rasterize_rects = _active.rasterize_rects
sp_pack = _active.sp_pack
longest_path = _active.longest_path
class_distance_sums = _active.class_distance_sums
sor_solve = _active.sor_solve
assign_sites = _active.assign_sites
nested_means_bounds = _active.nested_means_bounds
grow_trees = _active.grow_trees
greedy_cover = _active.greedy_cover

__all__ = [
    "BACKEND",
    "numpy_impl",
    "numba_impl",
    "rasterize_rects",
    "sp_pack",
    "longest_path",
    "class_distance_sums",
    "sor_solve",
    "assign_sites",
    "nested_means_bounds",
    "grow_trees",
    "greedy_cover",
]
