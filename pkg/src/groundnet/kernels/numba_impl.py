"""Numba @njit twins of the kernels in numpy_impl.

Same arithmetic, same order, loop form. Compiled lazily on first call and
cached on disk, so repeat processes skip JIT cost.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def iou_matrix(boxes_a, boxes_b):
    na = boxes_a.shape[0]
    nb = boxes_b.shape[0]
    out = np.zeros((na, nb), dtype=np.float64)
    for i in range(na):
        ax1 = boxes_a[i, 0]
        ay1 = boxes_a[i, 1]
        ax2 = boxes_a[i, 2]
        ay2 = boxes_a[i, 3]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        for j in range(nb):
            bx1 = boxes_b[j, 0]
            by1 = boxes_b[j, 1]
            bx2 = boxes_b[j, 2]
            by2 = boxes_b[j, 3]
            iw = min(ax2, bx2) - max(ax1, bx1)
            ih = min(ay2, by2) - max(ay1, by1)
            iw = max(iw, 0.0)
            ih = max(ih, 0.0)
            inter = iw * ih
            if inter > 0.0:
                area_b = (bx2 - bx1) * (by2 - by1)
                union = area_a + area_b - inter
                out[i, j] = inter / union
    return out


@njit(cache=True)
def roi_grid_samples(coord_map, boxes, cell, resolution):
    _, h, w = coord_map.shape
    r = resolution
    nb = boxes.shape[0]
    out = np.empty((nb, 2 * r * r), dtype=np.float64)
    for b in range(nb):
        x1 = boxes[b, 0]
        y1 = boxes[b, 1]
        x2 = boxes[b, 2]
        y2 = boxes[b, 3]
        for row in range(r):
            py = y1 + ((row + 0.5) / r) * (y2 - y1)
            gy = py / cell - 0.5
            if gy < 0.0:
                gy = 0.0
            elif gy > h - 1.0:
                gy = h - 1.0
            y0 = np.floor(gy)
            if h > 1 and y0 > h - 2.0:
                y0 = h - 2.0
            if y0 < 0.0:
                y0 = 0.0
            fy = gy - y0
            iy0 = int(y0)
            iy1 = min(iy0 + 1, h - 1)
            for col in range(r):
                px = x1 + ((col + 0.5) / r) * (x2 - x1)
                gx = px / cell - 0.5
                if gx < 0.0:
                    gx = 0.0
                elif gx > w - 1.0:
                    gx = w - 1.0
                x0 = np.floor(gx)
                if w > 1 and x0 > w - 2.0:
                    x0 = w - 2.0
                if x0 < 0.0:
                    x0 = 0.0
                fx = gx - x0
                ix0 = int(x0)
                ix1 = min(ix0 + 1, w - 1)
                for c in range(2):
                    v00 = coord_map[c, iy0, ix0]
                    v01 = coord_map[c, iy0, ix1]
                    v10 = coord_map[c, iy1, ix0]
                    v11 = coord_map[c, iy1, ix1]
                    top = v00 + fx * (v01 - v00)
                    bot = v10 + fx * (v11 - v10)
                    out[b, c * r * r + row * r + col] = top + fy * (bot - top)
    return out


@njit(cache=True)
def rasterize_pair_masks(boxes_i, boxes_j, canvas_w, canvas_h, raster, size):
    ne = boxes_i.shape[0]
    out = np.zeros((ne, 2 * size * size), dtype=np.float64)
    qx = np.empty(size, dtype=np.float64)
    qy = np.empty(size, dtype=np.float64)
    for t in range(size):
        s = int((t + 0.5) * raster / size)
        if s > raster - 1:
            s = raster - 1
        qx[t] = (s + 0.5) * (canvas_w / raster)
        qy[t] = (s + 0.5) * (canvas_h / raster)
    for e in range(ne):
        for c in range(2):
            if c == 0:
                x1 = boxes_i[e, 0]
                y1 = boxes_i[e, 1]
                x2 = boxes_i[e, 2]
                y2 = boxes_i[e, 3]
            else:
                x1 = boxes_j[e, 0]
                y1 = boxes_j[e, 1]
                x2 = boxes_j[e, 2]
                y2 = boxes_j[e, 3]
            # sample centers are sorted, so the inside region is contiguous
            c0 = 0
            while c0 < size and qx[c0] < x1:
                c0 += 1
            c1 = size
            while c1 > c0 and qx[c1 - 1] > x2:
                c1 -= 1
            r0 = 0
            while r0 < size and qy[r0] < y1:
                r0 += 1
            r1 = size
            while r1 > r0 and qy[r1 - 1] > y2:
                r1 -= 1
            base = c * size * size
            for row in range(r0, r1):
                out[e, base + row * size + c0:base + row * size + c1] = 1.0
    return out


@njit(cache=True)
def enumerate_assignments(node_scores, edge_index, edge_scores, beta):
    n, k = node_scores.shape
    ne = edge_index.shape[0]
    total = 1
    for _ in range(n):
        total *= k
    s = np.zeros(n, dtype=np.int64)
    best = np.zeros(n, dtype=np.int64)
    best_obj = -np.inf
    for idx in range(total):
        rem = idx
        for i in range(n - 1, -1, -1):
            s[i] = rem % k
            rem //= k
        obj = 0.0
        for i in range(n):
            obj += node_scores[i, s[i]]
        for e in range(ne):
            obj += beta * edge_scores[e, s[edge_index[e, 0]], s[edge_index[e, 1]]]
        if obj > best_obj:
            best_obj = obj
            for i in range(n):
                best[i] = s[i]
    return best
