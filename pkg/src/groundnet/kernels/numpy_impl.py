"""Pure-numpy implementations of the hot kernels.

These are the reference semantics; the numba twins in numba_impl.py must
produce the same values. Per-element arithmetic is kept in the same order in
both backends so results agree bit-for-bit.
"""

from __future__ import annotations

import numpy as np


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (N,4) / (M,4) box arrays in xyxy order."""
    a = np.asarray(boxes_a, dtype=np.float64)
    b = np.asarray(boxes_b, dtype=np.float64)
    ax1, ay1, ax2, ay2 = (a[:, i][:, None] for i in range(4))
    bx1, by1, bx2, by2 = (b[:, i][None, :] for i in range(4))
    iw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    iw = np.maximum(iw, 0.0)
    ih = np.maximum(ih, 0.0)
    inter = iw * ih
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    union = area_a + area_b - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=inter > 0.0)
    return out


def roi_grid_samples(coord_map: np.ndarray, boxes: np.ndarray, cell: float,
                     resolution: int) -> np.ndarray:
    """Bilinearly sample a (2,H,W) map on an RxR grid of box-interior points.

    Sample points sit at the centers of an RxR tiling of each box. Positions
    map to grid coordinates via g = p/cell - 0.5 and are clamped to the map
    border (border values extend outward). Returns (B, 2*R*R) with channel 0
    rows first.
    """
    cmap = np.asarray(coord_map, dtype=np.float64)
    boxes = np.asarray(boxes, dtype=np.float64)
    _, h, w = cmap.shape
    r = resolution
    nb = boxes.shape[0]

    steps = (np.arange(r, dtype=np.float64) + 0.5) / r
    px = boxes[:, 0:1] + steps[None, :] * (boxes[:, 2:3] - boxes[:, 0:1])  # (B,R)
    py = boxes[:, 1:2] + steps[None, :] * (boxes[:, 3:4] - boxes[:, 1:2])

    gx = np.clip(px / cell - 0.5, 0.0, w - 1.0)
    gy = np.clip(py / cell - 0.5, 0.0, h - 1.0)

    gx = np.broadcast_to(gx[:, None, :], (nb, r, r))  # x varies along columns
    gy = np.broadcast_to(gy[:, :, None], (nb, r, r))

    x0 = np.minimum(np.floor(gx), w - 2.0) if w > 1 else np.zeros_like(gx)
    y0 = np.minimum(np.floor(gy), h - 2.0) if h > 1 else np.zeros_like(gy)
    x0 = np.maximum(x0, 0.0)
    y0 = np.maximum(y0, 0.0)
    fx = gx - x0
    fy = gy - y0
    ix0 = x0.astype(np.int64)
    iy0 = y0.astype(np.int64)
    ix1 = np.minimum(ix0 + 1, w - 1)
    iy1 = np.minimum(iy0 + 1, h - 1)

    out = np.empty((nb, 2 * r * r), dtype=np.float64)
    for c in range(2):
        plane = cmap[c]
        v00 = plane[iy0, ix0]
        v01 = plane[iy0, ix1]
        v10 = plane[iy1, ix0]
        v11 = plane[iy1, ix1]
        top = v00 + fx * (v01 - v00)
        bot = v10 + fx * (v11 - v10)
        val = top + fy * (bot - top)
        out[:, c * r * r:(c + 1) * r * r] = val.reshape(nb, r * r)
    return out


def rasterize_pair_masks(boxes_i: np.ndarray, boxes_j: np.ndarray,
                         canvas_w: float, canvas_h: float,
                         raster: int, size: int) -> np.ndarray:
    """Two-channel binary masks of box pairs, nearest-resized to size x size.

    A raster cell is on when its center lies inside the box (closed edges).
    Returns (E, 2*size*size), channel for boxes_i first.
    """
    bi = np.asarray(boxes_i, dtype=np.float64)
    bj = np.asarray(boxes_j, dtype=np.float64)
    ne = bi.shape[0]

    cx = (np.arange(raster, dtype=np.float64) + 0.5) * (canvas_w / raster)
    cy = (np.arange(raster, dtype=np.float64) + 0.5) * (canvas_h / raster)
    # nearest-neighbor source index for each output cell
    sx = np.minimum(((np.arange(size) + 0.5) * raster / size).astype(np.int64), raster - 1)
    sy = np.minimum(((np.arange(size) + 0.5) * raster / size).astype(np.int64), raster - 1)
    qx = cx[sx]  # centers of the sampled raster cells, (size,)
    qy = cy[sy]

    out = np.empty((ne, 2 * size * size), dtype=np.float64)
    for c, b in ((0, bi), (1, bj)):
        inside_x = (qx[None, :] >= b[:, 0:1]) & (qx[None, :] <= b[:, 2:3])  # (E,size)
        inside_y = (qy[None, :] >= b[:, 1:2]) & (qy[None, :] <= b[:, 3:4])
        mask = (inside_y[:, :, None] & inside_x[:, None, :]).astype(np.float64)
        out[:, c * size * size:(c + 1) * size * size] = mask.reshape(ne, size * size)
    return out


def enumerate_assignments(node_scores: np.ndarray, edge_index: np.ndarray,
                          edge_scores: np.ndarray, beta: float) -> np.ndarray:
    """Argmax assignment by full lexicographic enumeration.

    Objective: sum_i node[i, s_i] + beta * sum_e edge[e, s_a, s_b]. Ties keep
    the lexicographically smallest assignment. Accumulation order (phrases
    ascending, then edges in list order) matches the numba twin and the
    brute-force oracle so tie comparisons see identical floats.
    """
    node = np.asarray(node_scores, dtype=np.float64)
    n, k = node.shape
    grids = np.meshgrid(*([np.arange(k)] * n), indexing="ij")
    assign = np.stack(grids, axis=-1).reshape(-1, n)  # lexicographic rows
    obj = np.zeros(assign.shape[0], dtype=np.float64)
    for i in range(n):
        obj += node[i, assign[:, i]]
    for e in range(edge_index.shape[0]):
        a, b = edge_index[e]
        obj += beta * edge_scores[e][assign[:, a], assign[:, b]]
    return assign[int(np.argmax(obj))].astype(np.int64)
