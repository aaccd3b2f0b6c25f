"""Non-blocking loss: no pixel may flow into the quadrilateral spanned by
the displaced middle 2x2 block of its 4x4 unit.

Membership in the (possibly concave) quadrilateral is decided by requiring
the point to fall inside a triangle under BOTH diagonal divisions (AC and
BD); a single division over-covers concave quads. Triangle tests count the
boundary as inside and accept both vertex orientations. Blocked peripheral
pixels are penalized by exp(-1/d) with d their minimum distance to the four
quad sides (as closed segments).

Gradients hold the membership indicators and occlusion gates constant and
flow through d only: the blocked point and the two endpoints of the
minimizing side (first of AB, BC, CD, DA on ties) receive gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import pixel_grid

# distances are clamped here before exp(-1/d); keeps 1/d^2 in the gradient
# bounded, and exp(-1/d) underflows to 0 at the floor anyway
DISTANCE_FLOOR = 1e-9

# offsets inside a 4x4 unit, (row, col) from the anchor
MIDDLE_OFFSETS = ((1, 1), (1, 2), (2, 2), (2, 1))  # A, B, C, D, cyclic
PERIPHERAL_OFFSETS = tuple(
    (dr, dc)
    for dr in range(4)
    for dc in range(4)
    if (dr, dc) not in ((1, 1), (1, 2), (2, 2), (2, 1))
)

_SIDES = ((0, 1), (1, 2), (2, 3), (3, 0))  # AB, BC, CD, DA


@dataclass
class QuadMembership:
    """Triangle memberships of a point under both diagonal divisions."""

    in_abc: bool
    in_acd: bool
    in_abd: bool
    in_bcd: bool

    @property
    def in_quad(self) -> bool:
        return (self.in_abc or self.in_acd) and (self.in_abd or self.in_bcd)


def cross2(a, b) -> float:
    """2D cross product a_x * b_y - a_y * b_x."""
    return float(a[0]) * float(b[1]) - float(a[1]) * float(b[0])


def _tri_contains(ax, ay, bx, by, cx, cy, px, py):
    """Vectorized point-in-triangle, boundary inclusive, orientation-free:
    the three edge cross products must share a sign (zeros allowed)."""
    c1 = (ax - bx) * (py - by) - (ay - by) * (px - bx)
    c2 = (cx - ax) * (py - ay) - (cy - ay) * (px - ax)
    c3 = (bx - cx) * (py - cy) - (by - cy) * (px - cx)
    return ((c1 >= 0) & (c2 >= 0) & (c3 >= 0)) | ((c1 <= 0) & (c2 <= 0) & (c3 <= 0))


def in_triangle(p, a, b, c) -> bool:
    """Boundary-inclusive membership of point p in triangle (a, b, c);
    invariant under vertex permutation."""
    return bool(
        _tri_contains(
            float(a[0]), float(a[1]), float(b[0]), float(b[1]),
            float(c[0]), float(c[1]), float(p[0]), float(p[1]),
        )
    )


def in_quadrilateral(p, a, b, c, d) -> QuadMembership:
    """Membership of p in quadrilateral a-b-c-d via the double division."""
    return QuadMembership(
        in_abc=in_triangle(p, a, b, c),
        in_acd=in_triangle(p, a, c, d),
        in_abd=in_triangle(p, a, b, d),
        in_bcd=in_triangle(p, b, c, d),
    )


def _segment_distance_fields(px, py, ax, ay, bx, by):
    """Distance of (px, py) to closed segment (a, b) plus what the gradient
    needs: the unit vector from the closest point to p and the clamped
    projection fraction. Degenerate segments measure to the point a."""
    vx = bx - ax
    vy = by - ay
    vv = vx * vx + vy * vy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(vv > 0.0, ((px - ax) * vx + (py - ay) * vy) / np.where(vv > 0, vv, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    ex = px - (ax + t * vx)
    ey = py - (ay + t * vy)
    d = np.hypot(ex, ey)
    safe = np.maximum(d, DISTANCE_FLOOR)
    return d, ex / safe, ey / safe, t


def point_segment_distance(p, s1, s2) -> float:
    """Euclidean distance from point p to the closed segment s1-s2."""
    d, _, _, _ = _segment_distance_fields(
        float(p[0]), float(p[1]),
        float(s1[0]), float(s1[1]), float(s2[0]), float(s2[1]),
    )
    return float(d)


def _intrusion_penalty(d):
    with np.errstate(divide="ignore"):
        return np.exp(-1.0 / np.maximum(d, DISTANCE_FLOOR))


def non_blocking_loss(flow: np.ndarray, occ: np.ndarray | None = None):
    """Mean intrusion penalty over all (H-3) x (W-3) units and 12 peripheral
    pixels each, with its analytic gradient with respect to the flow."""
    flow = np.asarray(flow, dtype=np.float64)
    h, w = flow.shape[:2]
    if h < 4 or w < 4:
        raise ValueError(f"need at least a 4x4 field, got {h}x{w}")
    if occ is not None and occ.shape[:2] != (h, w):
        raise ValueError(f"occ {occ.shape} and flow {flow.shape[:2]} sizes differ")

    pos = pixel_grid(h, w) + flow
    uh, uw = h - 3, w - 3
    n_units = uh * uw
    scale = 1.0 / (12.0 * n_units)

    def unit_slice(arr, dr, dc):
        return arr[dr : dr + uh, dc : dc + uw]

    corners = [unit_slice(pos, dr, dc) for dr, dc in MIDDLE_OFFSETS]
    corner_x = [c[..., 0] for c in corners]
    corner_y = [c[..., 1] for c in corners]
    if occ is not None:
        middle_free = np.ones((uh, uw), dtype=bool)
        for dr, dc in MIDDLE_OFFSETS:
            middle_free &= unit_slice(occ, dr, dc) == 0
    else:
        middle_free = np.ones((uh, uw), dtype=bool)

    grad = np.zeros_like(flow)
    total = 0.0
    for dr, dc in PERIPHERAL_OFFSETS:
        px = unit_slice(pos, dr, dc)[..., 0]
        py = unit_slice(pos, dr, dc)[..., 1]

        ax_, ay_ = corner_x[0], corner_y[0]
        bx_, by_ = corner_x[1], corner_y[1]
        cx_, cy_ = corner_x[2], corner_y[2]
        dx_, dy_ = corner_x[3], corner_y[3]
        member = (
            _tri_contains(ax_, ay_, bx_, by_, cx_, cy_, px, py)
            | _tri_contains(ax_, ay_, cx_, cy_, dx_, dy_, px, py)
        ) & (
            _tri_contains(ax_, ay_, bx_, by_, dx_, dy_, px, py)
            | _tri_contains(bx_, by_, cx_, cy_, dx_, dy_, px, py)
        )
        gate = member & middle_free
        if occ is not None:
            gate &= unit_slice(occ, dr, dc) == 0
        if not gate.any():
            continue

        dists = []
        units = []
        fracs = []
        for i, j in _SIDES:
            d, ex, ey, t = _segment_distance_fields(
                px, py, corner_x[i], corner_y[i], corner_x[j], corner_y[j]
            )
            dists.append(d)
            units.append((ex, ey))
            fracs.append(t)
        dists = np.stack(dists, axis=0)
        nearest = np.argmin(dists, axis=0)  # first minimum wins ties
        d = dists.min(axis=0)

        pen = _intrusion_penalty(d)
        total += float(pen[gate].sum())

        dclamped = np.maximum(d, DISTANCE_FLOOR)
        gfac = np.where(gate & (d > DISTANCE_FLOOR), scale * pen / (dclamped * dclamped), 0.0)
        for side, (i, j) in enumerate(_SIDES):
            gm = np.where(nearest == side, gfac, 0.0)
            if not gm.any():
                continue
            ex, ey = units[side]
            t = fracs[side]
            gx = gm * ex
            gy = gm * ey
            grad[dr : dr + uh, dc : dc + uw, 0] += gx
            grad[dr : dr + uh, dc : dc + uw, 1] += gy
            ri, ci = MIDDLE_OFFSETS[i]
            rj, cj = MIDDLE_OFFSETS[j]
            grad[ri : ri + uh, ci : ci + uw, 0] -= (1.0 - t) * gx
            grad[ri : ri + uh, ci : ci + uw, 1] -= (1.0 - t) * gy
            grad[rj : rj + uh, cj : cj + uw, 0] -= t * gx
            grad[rj : rj + uh, cj : cj + uw, 1] -= t * gy

    return total * scale, grad


def unit_blocking_loss(
    flow: np.ndarray, occ: np.ndarray | None, anchor: tuple[int, int]
) -> float:
    """Intrusion penalty of the single 4x4 unit anchored at (row, col)."""
    flow = np.asarray(flow, dtype=np.float64)
    h, w = flow.shape[:2]
    r, c = anchor
    if not (0 <= r <= h - 4 and 0 <= c <= w - 4):
        raise ValueError(f"anchor {anchor} does not fit a 4x4 unit in {h}x{w}")

    def mapped(dr, dc):
        row, col = r + dr, c + dc
        return np.array([col + flow[row, col, 0], row + flow[row, col, 1]])

    quad = [mapped(dr, dc) for dr, dc in MIDDLE_OFFSETS]
    if occ is not None and any(occ[r + dr, c + dc] != 0 for dr, dc in MIDDLE_OFFSETS):
        return 0.0

    total = 0.0
    for dr, dc in PERIPHERAL_OFFSETS:
        if occ is not None and occ[r + dr, c + dc] != 0:
            continue
        p = mapped(dr, dc)
        if not in_quadrilateral(p, *quad).in_quad:
            continue
        d = min(point_segment_distance(p, quad[i], quad[j]) for i, j in _SIDES)
        total += float(_intrusion_penalty(d))
    return total / 12.0
