"""Mask centroids and box extraction (axis-aligned and minimum-area rotated)."""
from __future__ import annotations

import math

import numpy as np

from .errors import EmptyMaskError
from .mask import MaskPair


def _points(mask, threshold: float) -> np.ndarray:
    fg = mask.fg if isinstance(mask, MaskPair) else np.asarray(mask, dtype=np.float64)
    pts = np.argwhere(fg > threshold)
    if len(pts) == 0:
        raise EmptyMaskError("no pixel above the mask threshold")
    return pts


def centroid(mask, threshold: float = 0.5) -> tuple[float, float]:
    """Mean (row, col) of the pixels whose fg probability exceeds ``threshold``."""
    pts = _points(mask, threshold)
    return float(pts[:, 0].mean()), float(pts[:, 1].mean())


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; counter-clockwise vertices, collinear points dropped.

    Degenerate inputs are fine: one point gives one vertex, collinear
    points give the two extremes.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2:
                (ax, ay), (bx, by) = chain[-2], chain[-1]
                if (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax) > 0:
                    break
                chain.pop()
            chain.append((p[0], p[1]))
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def min_area_rect(points) -> tuple[float, float, float, float, float]:
    """Minimum-area enclosing rectangle ``(cx, cy, w, h, theta)`` of 2-D ``(x, y)`` points.

    One side of the optimal rectangle is collinear with a hull edge, so
    only hull edge directions are tried (the rotating-calipers argument).
    ``w`` runs along ``theta``; ``theta`` is folded into [0, pi/2).
    """
    hull = convex_hull(points)
    if len(hull) == 1:
        return float(hull[0, 0]), float(hull[0, 1]), 0.0, 0.0, 0.0
    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    keep = lengths > 0
    u = edges[keep] / lengths[keep, None]
    n = np.stack([-u[:, 1], u[:, 0]], axis=1)
    pu = hull @ u.T  # (vertices, edges)
    pn = hull @ n.T
    w = pu.max(axis=0) - pu.min(axis=0)
    h = pn.max(axis=0) - pn.min(axis=0)
    i = int(np.argmin(w * h))
    cu = 0.5 * (pu[:, i].max() + pu[:, i].min())
    cn = 0.5 * (pn[:, i].max() + pn[:, i].min())
    cx, cy = cu * u[i] + cn * n[i]
    theta = math.atan2(u[i, 1], u[i, 0]) % math.pi
    wi, hi = float(w[i]), float(h[i])
    if theta >= 0.5 * math.pi - 1e-12:
        theta -= 0.5 * math.pi
        wi, hi = hi, wi
    if abs(theta) < 1e-12:
        theta = 0.0
    return float(cx), float(cy), wi, hi, float(theta)


def mask_to_boxes(mask, threshold: float = 0.5):
    """Tight axis box ``(x, y, w, h)`` and rotated box ``(cx, cy, w, h, theta)``.

    Both measure pixel footprints: the rotated box is fitted to pixel
    centers and then grown by one pixel per side length, so a single
    pixel yields 1x1 boxes.
    """
    pts = _points(mask, threshold)
    r0, c0 = pts.min(axis=0)
    r1, c1 = pts.max(axis=0)
    axis_box = (float(c0), float(r0), float(c1 - c0 + 1), float(r1 - r0 + 1))
    cx, cy, w, h, theta = min_area_rect(pts[:, ::-1])
    return axis_box, (cx, cy, w + 1.0, h + 1.0, theta)


def rotated_area(box) -> float:
    return box[2] * box[3]
