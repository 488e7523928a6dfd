"""Boxes, IoU, union regions, the regression-offset codec, and soft-label targets.

Scalar operations work on Box values; bulk variants take (N,4) xyxy arrays and
route through the kernel backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

# log-size offsets are clamped on decode so refined boxes stay finite
MAX_LOG_SCALE = math.log(1000.0 / 16.0)


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle in scene coordinates, x1 < x2 and y1 < y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (math.isfinite(self.x1) and math.isfinite(self.y1)
                and math.isfinite(self.x2) and math.isfinite(self.y2)):
            raise ValueError("box coordinates must be finite")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box ({self.x1},{self.y1},{self.x2},{self.y2})")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def contains(self, other: "Box") -> bool:
        return (self.x1 <= other.x1 and self.y1 <= other.y1
                and self.x2 >= other.x2 and self.y2 >= other.y2)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)

    @staticmethod
    def from_array(arr) -> "Box":
        return Box(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]))


@dataclass(frozen=True)
class OffsetVector:
    """Dimensionless box regression target (dx, dy, dw, dh)."""

    dx: float
    dy: float
    dw: float
    dh: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dw, self.dh)):
            raise ValueError("offset components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dw, self.dh], dtype=np.float64)


@dataclass(frozen=True)
class SoftLabelDist:
    """Non-negative weights over a candidate set, normalized to sum 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(float(w.sum()) - 1.0) > 1e-6:
            raise ValueError("weights must sum to 1")


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def union_box(a: Box, b: Box) -> Box:
    """Smallest box covering both inputs."""
    return Box(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2))


def boxes_to_array(boxes) -> np.ndarray:
    return np.array([[b.x1, b.y1, b.x2, b.y2] for b in boxes], dtype=np.float64)


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    return kernels.iou_matrix(np.asarray(boxes_a, dtype=np.float64),
                              np.asarray(boxes_b, dtype=np.float64))


def encode_offset(proposal: Box, target: Box) -> OffsetVector:
    """Center/log-size offset taking `proposal` onto `target`."""
    pcx, pcy = proposal.center
    tcx, tcy = target.center
    return OffsetVector(
        (tcx - pcx) / proposal.width,
        (tcy - pcy) / proposal.height,
        math.log(target.width / proposal.width),
        math.log(target.height / proposal.height),
    )


def decode_offset(delta: OffsetVector, proposal: Box) -> Box:
    """Invert encode_offset: apply an offset to a proposal box."""
    cx = 0.5 * (proposal.x1 + proposal.x2) + delta.dx * proposal.width
    cy = 0.5 * (proposal.y1 + proposal.y2) + delta.dy * proposal.height
    w = proposal.width * math.exp(delta.dw)
    h = proposal.height * math.exp(delta.dh)
    return Box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def encode_offsets(proposals: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Vectorized encode_offset over (N,4) arrays."""
    p = np.asarray(proposals, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    pw = p[:, 2] - p[:, 0]
    ph = p[:, 3] - p[:, 1]
    tw = t[:, 2] - t[:, 0]
    th = t[:, 3] - t[:, 1]
    return np.stack([
        (0.5 * (t[:, 0] + t[:, 2]) - 0.5 * (p[:, 0] + p[:, 2])) / pw,
        (0.5 * (t[:, 1] + t[:, 3]) - 0.5 * (p[:, 1] + p[:, 3])) / ph,
        np.log(tw / pw),
        np.log(th / ph),
    ], axis=1)


def decode_offsets(deltas: np.ndarray, proposals: np.ndarray,
                   clamp: bool = False) -> np.ndarray:
    """Vectorized decode_offset; clamp bounds the log-scale terms."""
    d = np.asarray(deltas, dtype=np.float64)
    p = np.asarray(proposals, dtype=np.float64)
    if clamp:
        d = d.copy()
        d[:, 2:] = np.clip(d[:, 2:], -MAX_LOG_SCALE, MAX_LOG_SCALE)
    pw = p[:, 2] - p[:, 0]
    ph = p[:, 3] - p[:, 1]
    cx = 0.5 * (p[:, 0] + p[:, 2]) + d[:, 0] * pw
    cy = 0.5 * (p[:, 1] + p[:, 3]) + d[:, 1] * ph
    w = pw * np.exp(d[:, 2])
    h = ph * np.exp(d[:, 3])
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)


def node_soft_labels(candidates: list[Box] | np.ndarray, gt: Box,
                     tau: float) -> SoftLabelDist:
    """IoU-proportional target over candidates, thresholded at tau.

    Candidates below tau get zero weight; if none passes, all mass goes to
    the best-IoU candidate (first on ties).
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    cand = candidates if isinstance(candidates, np.ndarray) else boxes_to_array(candidates)
    if cand.shape[0] == 0:
        raise ValueError("candidate set must be non-empty")
    ious = kernels.iou_matrix(cand, gt.as_array()[None, :])[:, 0]
    weights = np.where(ious >= tau, ious, 0.0)
    total = float(weights.sum())
    if total <= 0.0:
        weights = np.zeros_like(ious)
        weights[int(np.argmax(ious))] = 1.0
        return SoftLabelDist(weights)
    return SoftLabelDist(weights / total)


def edge_soft_labels(pairs: list[tuple[Box, Box]] | tuple[np.ndarray, np.ndarray],
                     gt: tuple[Box, Box], tau: float) -> SoftLabelDist:
    """Pairwise target: product of member IoUs, both endpoints gated at tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    if isinstance(pairs, tuple) and isinstance(pairs[0], np.ndarray):
        first, second = pairs
    else:
        first = boxes_to_array([p[0] for p in pairs])
        second = boxes_to_array([p[1] for p in pairs])
    if first.shape[0] == 0:
        raise ValueError("pair set must be non-empty")
    iou_i = kernels.iou_matrix(first, gt[0].as_array()[None, :])[:, 0]
    iou_j = kernels.iou_matrix(second, gt[1].as_array()[None, :])[:, 0]
    product = iou_i * iou_j
    weights = np.where((iou_i >= tau) & (iou_j >= tau), product, 0.0)
    total = float(weights.sum())
    if total <= 0.0:
        weights = np.zeros_like(product)
        weights[int(np.argmax(product))] = 1.0
        return SoftLabelDist(weights)
    return SoftLabelDist(weights / total)


def clip_box_to_canvas(box: np.ndarray, canvas_w: float, canvas_h: float,
                       min_size: float = 1e-3) -> np.ndarray:
    """Clip an xyxy row into the canvas, preserving a minimum side length."""
    x1 = min(max(box[0], 0.0), canvas_w - min_size)
    y1 = min(max(box[1], 0.0), canvas_h - min_size)
    x2 = min(max(box[2], x1 + min_size), canvas_w)
    y2 = min(max(box[3], y1 + min_size), canvas_h)
    return np.array([x1, y1, x2, y2], dtype=np.float64)


def clip_boxes_to_canvas(boxes: np.ndarray, canvas_w: float, canvas_h: float,
                         min_size: float = 1e-3) -> np.ndarray:
    """Vectorized clip_box_to_canvas over an (N,4) array."""
    b = np.asarray(boxes, dtype=np.float64)
    x1 = np.minimum(np.maximum(b[:, 0], 0.0), canvas_w - min_size)
    y1 = np.minimum(np.maximum(b[:, 1], 0.0), canvas_h - min_size)
    x2 = np.minimum(np.maximum(b[:, 2], x1 + min_size), canvas_w)
    y2 = np.minimum(np.maximum(b[:, 3], y1 + min_size), canvas_h)
    return np.stack([x1, y1, x2, y2], axis=1)
