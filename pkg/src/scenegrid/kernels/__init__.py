"""Geometry kernels with a compiled core and a pure-Python fallback.

The compiled extension is used when it imports; setting
``SCENEGRID_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _geom_py as python_backend

compiled_backend = None
if os.environ.get("SCENEGRID_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _geom as compiled_backend  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "cython" if compiled_backend is not None else "python"

box_corners = backend.box_corners
polygon_area = backend.polygon_area
obb_iou = backend.obb_iou
obb_overlap = backend.obb_overlap
tick_collision_flags = backend.tick_collision_flags
track_conflict = backend.track_conflict
points_in_polygon = backend.points_in_polygon

__all__ = [
    "BACKEND_NAME",
    "backend",
    "box_corners",
    "compiled_backend",
    "obb_iou",
    "obb_overlap",
    "points_in_polygon",
    "polygon_area",
    "python_backend",
    "tick_collision_flags",
    "track_conflict",
]
