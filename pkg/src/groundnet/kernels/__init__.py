"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The backend is picked once at import from the GROUNDNET_BACKEND environment
variable ("numba", "numpy", or "auto"; default auto = numba when importable)
and can be switched at runtime with set_backend(). Both backends compute the
same values; benchmarks/bench_kernels.py compares their speed.
"""

from __future__ import annotations

import os

from . import numpy_impl

_KERNEL_NAMES = (
    "iou_matrix",
    "roi_grid_samples",
    "rasterize_pair_masks",
    "enumerate_assignments",
)

try:
    from . import numba_impl
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None
    HAS_NUMBA = False

_backend_name = "numpy"
_active = {name: getattr(numpy_impl, name) for name in _KERNEL_NAMES}


def set_backend(name: str) -> None:
    """Select the kernel backend: "numba", "numpy", or "auto"."""
    global _backend_name
    if name == "auto":
        name = "numba" if HAS_NUMBA else "numpy"
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        module = numba_impl
    elif name == "numpy":
        module = numpy_impl
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    for kernel in _KERNEL_NAMES:
        _active[kernel] = getattr(module, kernel)
    _backend_name = name


def get_backend() -> str:
    return _backend_name


def iou_matrix(boxes_a, boxes_b):
    return _active["iou_matrix"](boxes_a, boxes_b)


def roi_grid_samples(coord_map, boxes, cell, resolution):
    return _active["roi_grid_samples"](coord_map, boxes, cell, resolution)


def rasterize_pair_masks(boxes_i, boxes_j, canvas_w, canvas_h, raster, size):
    return _active["rasterize_pair_masks"](boxes_i, boxes_j, canvas_w, canvas_h,
                                           raster, size)


def enumerate_assignments(node_scores, edge_index, edge_scores, beta):
    return _active["enumerate_assignments"](node_scores, edge_index, edge_scores, beta)


set_backend(os.environ.get("GROUNDNET_BACKEND", "auto"))
