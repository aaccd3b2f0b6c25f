"""Non-intersection loss: displacement segments of neighboring pixels must
not cross inside non-occluded regions.

The image is scanned with a 3x3 sliding window; in each unit the center
pixel's displacement segment is tested against the segments of its 8
neighbors. A pair crosses when both fractional crossing positions lie
strictly inside (0, 1); crossing pairs are penalized by a color-similarity
weight times a robust penalty of exp(-(difference of the two fractions)^2).

Gradient semantics: crossing indicators, occlusion masks and color weights
are constants under differentiation; only the two crossing fractions carry
gradient, through the flow vectors of both endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .photometric import RobustLossParams, robust_penalty

# |denominator| at or below this is treated as parallel (non-crossing),
# including collinear overlap
PARALLEL_TOL = 1e-12

# the 8 neighbors of a unit center, (row offset, col offset), row-major
NEIGHBOR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


@dataclass
class IntersectCoeffs:
    """Crossing-position fractions of a pair of displacement segments.

    ``t_center`` is the fraction along the center segment, ``t_neighbor``
    along the neighbor segment, ``denom`` the pair determinant (signed,
    squared pixels). When ``parallel`` is set the fractions are undefined
    (reported as nan) and the pair never counts as crossing.
    """

    t_center: float
    t_neighbor: float
    denom: float
    parallel: bool

    @property
    def intersecting(self) -> bool:
        if self.parallel:
            return False
        return 0.0 < self.t_center < 1.0 and 0.0 < self.t_neighbor < 1.0


def color_weight(center_color, neighbor_color):
    """exp(-(1/3) sum of absolute per-channel differences); in (1/e, 1]."""
    center_color = np.asarray(center_color, dtype=np.float64)
    neighbor_color = np.asarray(neighbor_color, dtype=np.float64)
    return np.exp(-np.abs(neighbor_color - center_color).sum(axis=-1) / 3.0)


def _coeff_core(rx, ry, dax, day, dbx, dby):
    """Shared coefficient math for segment pair (a, a+da) vs (b, b+db),
    with (rx, ry) = b - a. Returns (safe denom, t_a, t_b, nonparallel)."""
    denom = -dax * dby + dbx * day
    nonpar = np.abs(denom) > PARALLEL_TOL
    safe = np.where(nonpar, denom, 1.0)
    t_a = (-rx * dby + dbx * ry) / safe
    t_b = (dax * ry - rx * day) / safe
    return denom, safe, t_a, t_b, nonpar


def coefficient_crossing(pos_a, disp_a, pos_b, disp_b):
    """Vectorized crossing declaration from the coefficient formulas.

    Inputs are (..., 2) position/displacement arrays. Returns
    (crossing, denom, t_a, t_b); the fractions are meaningless where the
    pair is parallel (|denom| at or below the tolerance).
    """
    pos_a = np.asarray(pos_a, dtype=np.float64)
    pos_b = np.asarray(pos_b, dtype=np.float64)
    disp_a = np.asarray(disp_a, dtype=np.float64)
    disp_b = np.asarray(disp_b, dtype=np.float64)
    denom, _, t_a, t_b, nonpar = _coeff_core(
        pos_b[..., 0] - pos_a[..., 0],
        pos_b[..., 1] - pos_a[..., 1],
        disp_a[..., 0], disp_a[..., 1],
        disp_b[..., 0], disp_b[..., 1],
    )
    crossing = nonpar & (t_a > 0) & (t_a < 1) & (t_b > 0) & (t_b < 1)
    return crossing, denom, t_a, t_b


def intersection_coeffs(center_pos, center_disp, neighbor_pos, neighbor_disp) -> IntersectCoeffs:
    """Crossing fractions of the segments center_pos -> center_pos + center_disp
    and neighbor_pos -> neighbor_pos + neighbor_disp (positions are (x, y))."""
    denom, _, t_c, t_n, nonpar = _coeff_core(
        float(neighbor_pos[0]) - float(center_pos[0]),
        float(neighbor_pos[1]) - float(center_pos[1]),
        float(center_disp[0]), float(center_disp[1]),
        float(neighbor_disp[0]), float(neighbor_disp[1]),
    )
    if not nonpar:
        return IntersectCoeffs(np.nan, np.nan, float(denom), True)
    return IntersectCoeffs(float(t_c), float(t_n), float(denom), False)


def _pair_fields(flow, occ, dr, dc):
    """Vectorized pair state between every unit center and one neighbor
    offset; all arrays are (H-2, W-2)."""
    h, w = flow.shape[:2]
    um = flow[1 : h - 1, 1 : w - 1, 0]
    vm = flow[1 : h - 1, 1 : w - 1, 1]
    un = flow[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc, 0]
    vn = flow[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc, 1]

    _, safe, t_c, t_n, nonpar = _coeff_core(float(dc), float(dr), um, vm, un, vn)
    crossing = nonpar & (t_c > 0) & (t_c < 1) & (t_n > 0) & (t_n < 1)
    gate = crossing
    if occ is not None:
        occ_m = occ[1 : h - 1, 1 : w - 1]
        occ_n = occ[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc]
        gate = crossing & (occ_m == 0) & (occ_n == 0)
    return um, vm, un, vn, safe, t_c, t_n, gate


def non_intersection_loss(
    image: np.ndarray,
    flow: np.ndarray,
    occ: np.ndarray,
    robust: RobustLossParams | None = None,
):
    """Mean crossing penalty over all (H-2) x (W-2) units, with its analytic
    gradient with respect to every flow component."""
    if robust is None:
        robust = RobustLossParams()
    image = np.asarray(image, dtype=np.float64)
    flow = np.asarray(flow, dtype=np.float64)
    h, w = flow.shape[:2]
    if h < 3 or w < 3:
        raise ValueError(f"need at least a 3x3 field, got {h}x{w}")
    if image.shape[:2] != (h, w):
        raise ValueError(
            f"image {image.shape[:2]} and flow {flow.shape[:2]} sizes differ"
        )

    n_units = (h - 2) * (w - 2)
    scale = 1.0 / (8.0 * n_units)
    q, eps = robust.exponent, robust.epsilon
    center_colors = image[1 : h - 1, 1 : w - 1]
    grad = np.zeros_like(flow)
    total = 0.0
    for dr, dc in NEIGHBOR_OFFSETS:
        um, vm, un, vn, denom, t_c, t_n, gate = _pair_fields(flow, occ, dr, dc)
        if not gate.any():
            continue
        neighbor_colors = image[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc]
        weight = color_weight(center_colors, neighbor_colors)

        diff = t_c - t_n
        closeness = np.exp(-diff * diff)
        pen = robust_penalty(closeness, robust)
        total += float((weight * pen)[gate].sum())

        # d(pair term)/d(fraction difference), active pairs only
        dpen = np.where(
            gate,
            scale * weight * q * (closeness + eps) ** (q - 1.0) * closeness * (-2.0 * diff),
            0.0,
        )
        a = float(dc)
        b = float(dr)
        grad[1 : h - 1, 1 : w - 1, 0] += dpen * (-b + diff * vn) / denom
        grad[1 : h - 1, 1 : w - 1, 1] += dpen * (a - diff * un) / denom
        grad[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc, 0] += dpen * (b - diff * vm) / denom
        grad[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc, 1] += dpen * (-a + diff * um) / denom

    return total * scale, grad


def unit_intersection_loss(
    flow: np.ndarray,
    image: np.ndarray,
    occ: np.ndarray,
    center: tuple[int, int],
    robust: RobustLossParams | None = None,
) -> float:
    """Crossing penalty of a single 3x3 unit centered at (row, col)."""
    if robust is None:
        robust = RobustLossParams()
    flow = np.asarray(flow, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    h, w = flow.shape[:2]
    r, c = center
    if not (1 <= r <= h - 2 and 1 <= c <= w - 2):
        raise ValueError(f"center {center} does not fit a 3x3 unit in {h}x{w}")

    total = 0.0
    for dr, dc in NEIGHBOR_OFFSETS:
        rn, cn = r + dr, c + dc
        if occ is not None and (occ[r, c] != 0 or occ[rn, cn] != 0):
            continue
        coeffs = intersection_coeffs(
            (c, r), flow[r, c], (cn, rn), flow[rn, cn]
        )
        if not coeffs.intersecting:
            continue
        weight = float(color_weight(image[r, c], image[rn, cn]))
        diff = coeffs.t_center - coeffs.t_neighbor
        total += weight * float(robust_penalty(np.exp(-diff * diff), robust))
    return total / 8.0


def crossing_count(flow: np.ndarray, occ: np.ndarray | None = None) -> int:
    """Number of (unit, neighbor) pairs declared crossing among non-occluded
    pairs; a pure predicate count with no weights."""
    flow = np.asarray(flow, dtype=np.float64)
    h, w = flow.shape[:2]
    if h < 3 or w < 3:
        return 0
    count = 0
    for dr, dc in NEIGHBOR_OFFSETS:
        *_, gate = _pair_fields(flow, occ, dr, dc)
        count += int(gate.sum())
    return count
