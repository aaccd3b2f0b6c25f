"""Independent geometric predicates used to cross-check the loss kernels.

These are deliberately implemented with different constructions than the
loss modules: segment crossing uses orientation tests instead of the
coefficient ratios, and point-in-polygon uses even-odd ray casting instead
of the triangle-division test. Keeping the two routes independent is the
whole point; do not "unify" them.

All predicates accept scalars or broadcastable numpy arrays.
"""

from __future__ import annotations

import numpy as np


def orientation(ax, ay, bx, by, cx, cy):
    """Twice the signed area of triangle (a, b, c); >0 means counterclockwise
    in a y-up frame."""
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segments_properly_cross(p1, p2, q1, q2):
    """True where open segments p1-p2 and q1-q2 cross at a single interior
    point of both.

    Endpoint contact and collinear overlap do not count. Inputs are (..., 2)
    arrays of segment endpoints.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    d1 = orientation(q1[..., 0], q1[..., 1], q2[..., 0], q2[..., 1], p1[..., 0], p1[..., 1])
    d2 = orientation(q1[..., 0], q1[..., 1], q2[..., 0], q2[..., 1], p2[..., 0], p2[..., 1])
    d3 = orientation(p1[..., 0], p1[..., 1], p2[..., 0], p2[..., 1], q1[..., 0], q1[..., 1])
    d4 = orientation(p1[..., 0], p1[..., 1], p2[..., 0], p2[..., 1], q2[..., 0], q2[..., 1])
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def point_in_simple_polygon(px, py, vertices) -> np.ndarray:
    """Even-odd ray-casting membership for a simple polygon.

    ``vertices`` is (..., n, 2) and (px, py) broadcast against its leading
    axes. Points exactly on an edge are not reliably classified; callers
    must keep queries away from edges.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    vertices = np.asarray(vertices, dtype=np.float64)
    n = vertices.shape[-2]
    inside = np.zeros(np.broadcast(px, vertices[..., 0, 0]).shape, dtype=bool)
    for i in range(n):
        x1 = vertices[..., i, 0]
        y1 = vertices[..., i, 1]
        x2 = vertices[..., (i + 1) % n, 0]
        y2 = vertices[..., (i + 1) % n, 1]
        straddles = (y1 <= py) != (y2 <= py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= straddles & (px < x_cross)
    return inside


def point_segment_distance_bruteforce(px, py, ax, ay, bx, by):
    """Distance from (px, py) to closed segment (a, b) by dense sampling.

    Slow reference used only in tests; 20001 samples give ~1e-4 accuracy
    on unit-scale segments.
    """
    t = np.linspace(0.0, 1.0, 20001)
    sx = ax + t * (bx - ax)
    sy = ay + t * (by - ay)
    return np.min(np.hypot(px - sx, py - sy))


def polygon_is_simple(a, b, c, d) -> np.ndarray:
    """True where quadrilateral a-b-c-d has no crossing between its two
    pairs of non-adjacent edges and no degenerate (zero-length) edge."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    ok = ~segments_properly_cross(a, b, c, d) & ~segments_properly_cross(b, c, d, a)
    for p, q in ((a, b), (b, c), (c, d), (d, a)):
        ok &= np.any(p != q, axis=-1)
    # reject fully collinear vertex sets (zero-area "polygons")
    area = np.abs(
        orientation(a[..., 0], a[..., 1], b[..., 0], b[..., 1], c[..., 0], c[..., 1])
    ) + np.abs(
        orientation(a[..., 0], a[..., 1], c[..., 0], c[..., 1], d[..., 0], d[..., 1])
    )
    ok &= area > 1e-12
    return ok


def polygon_is_convex(a, b, c, d) -> np.ndarray:
    """True where the (simple) quadrilateral a-b-c-d is convex."""
    pts = [np.asarray(p, dtype=np.float64) for p in (a, b, c, d)]
    signs = []
    for i in range(4):
        p, q, r = pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]
        signs.append(
            orientation(p[..., 0], p[..., 1], q[..., 0], q[..., 1], r[..., 0], r[..., 1])
        )
    signs = np.stack(signs, axis=0)
    return np.all(signs >= 0, axis=0) | np.all(signs <= 0, axis=0)
