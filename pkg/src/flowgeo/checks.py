"""Randomized verification suites: geometric predicates against independent
oracles, and gradient checks on seeded scenes.

The segment suite compares the crossing declaration of the coefficient
formulas against orientation tests; the quadrilateral suite compares the
double-division membership against even-odd ray casting. Both skip samples
within a stated margin of a degeneracy, where the two routes may round
differently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import blocking, oracles
from .blocking import _segment_distance_fields, _tri_contains
from .core import OcclusionParams, pixel_grid
from .intersection import coefficient_crossing
from .optimize import FDCheckResult, LossConfig, finite_diff_check

# block uses a finer step: exp(-1/d) curvature on tight intrusions otherwise
# puts plain truncation error near the pass bound
GRADCHECK_STEPS = {"census": 1e-3, "smooth": 1e-4, "inter": 1e-4, "block": 4e-5}
GRADCHECK_THRESHOLDS = {"census": 1e-3, "smooth": 1e-6, "inter": 1e-4, "block": 1e-4}


@dataclass
class AgreementResult:
    compared: int
    mismatches: int
    skipped_degenerate: int


def segment_predicate_agreement(
    samples: int = 100_000, seed: int = 0, margin: float = 1e-9
) -> AgreementResult:
    """Crossing declaration versus the orientation-test oracle on random
    segment pairs (positions in [0, 10]^2, displacements in [-5, 5]^2)."""
    rng = np.random.default_rng(seed)
    pos_a = rng.uniform(0.0, 10.0, (samples, 2))
    pos_b = rng.uniform(0.0, 10.0, (samples, 2))
    disp_a = rng.uniform(-5.0, 5.0, (samples, 2))
    disp_b = rng.uniform(-5.0, 5.0, (samples, 2))

    declared, denom, t_a, t_b = coefficient_crossing(pos_a, disp_a, pos_b, disp_b)
    clear = (
        (np.abs(denom) > margin)
        & (np.abs(t_a) > margin)
        & (np.abs(t_a - 1.0) > margin)
        & (np.abs(t_b) > margin)
        & (np.abs(t_b - 1.0) > margin)
    )
    reference = oracles.segments_properly_cross(
        pos_a, pos_a + disp_a, pos_b, pos_b + disp_b
    )
    mism = int((declared[clear] != reference[clear]).sum())
    return AgreementResult(int(clear.sum()), mism, int(samples - clear.sum()))


def _double_division_membership(quads: np.ndarray, px: np.ndarray, py: np.ndarray):
    """Vectorized double-division membership; quads is (..., 4, 2)."""
    ax, ay = quads[..., 0, 0], quads[..., 0, 1]
    bx, by = quads[..., 1, 0], quads[..., 1, 1]
    cx, cy = quads[..., 2, 0], quads[..., 2, 1]
    dx, dy = quads[..., 3, 0], quads[..., 3, 1]
    return (
        _tri_contains(ax, ay, bx, by, cx, cy, px, py)
        | _tri_contains(ax, ay, cx, cy, dx, dy, px, py)
    ) & (
        _tri_contains(ax, ay, bx, by, dx, dy, px, py)
        | _tri_contains(bx, by, cx, cy, dx, dy, px, py)
    )


def sample_simple_quads(count: int, seed: int = 0):
    """Simple (non-self-intersecting) quadrilaterals: a unit square with
    vertices jittered uniformly in [-2, 2]^2. Returns (count, 4, 2)."""
    rng = np.random.default_rng(seed)
    base = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    quads = np.empty((0, 4, 2))
    while quads.shape[0] < count:
        batch = base + rng.uniform(-2.0, 2.0, (count * 2, 4, 2))
        keep = oracles.polygon_is_simple(
            batch[:, 0], batch[:, 1], batch[:, 2], batch[:, 3]
        )
        quads = np.concatenate([quads, batch[keep]])
    return quads[:count]


def quad_membership_agreement(
    quad_count: int = 10_000,
    queries_per_quad: int = 10,
    seed: int = 0,
    edge_margin: float = 1e-6,
) -> tuple[AgreementResult, int, int]:
    """Double-division membership versus even-odd ray casting on random
    simple quads; returns (result, convex count, concave count)."""
    rng = np.random.default_rng(seed + 1)
    quads = sample_simple_quads(quad_count, seed)
    convex = oracles.polygon_is_convex(
        quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3]
    )

    lo = quads.min(axis=1) - 0.25
    hi = quads.max(axis=1) + 0.25
    shape = (quad_count, queries_per_quad)
    px = lo[:, None, 0] + rng.uniform(0, 1, shape) * (hi - lo)[:, None, 0]
    py = lo[:, None, 1] + rng.uniform(0, 1, shape) * (hi - lo)[:, None, 1]

    q = quads[:, None, :, :]
    edge_dist = np.full(shape, np.inf)
    for i in range(4):
        j = (i + 1) % 4
        d, _, _, _ = _segment_distance_fields(
            px, py, q[..., i, 0], q[..., i, 1], q[..., j, 0], q[..., j, 1]
        )
        edge_dist = np.minimum(edge_dist, d)
    clear = edge_dist > edge_margin

    declared = _double_division_membership(q, px, py)
    reference = oracles.point_in_simple_polygon(px, py, q)
    mism = int((declared[clear] != reference[clear]).sum())
    result = AgreementResult(int(clear.sum()), mism, int((~clear).sum()))
    return result, int(convex.sum()), int((~convex).sum())


def gradcheck_scene(seed: int = 0, height: int = 12, width: int = 14):
    """Seeded scene for gradient checks.

    Frames are gently textured so edge weights and census responses stay
    well-conditioned. Flows are a smooth roughly forward-backward-consistent
    base (so occlusion gating is sparse) plus per-pixel jitter that produces
    segment crossings, plus a few injected peripheral pixels that land
    inside their unit's mapped middle quad to exercise the intrusion path.
    """
    rng = np.random.default_rng(seed)

    def smoothed(arr, rounds):
        for _ in range(rounds):
            pad = np.pad(arr, 1, mode="edge")
            arr = sum(
                pad[dy : dy + height, dx : dx + width]
                for dy in range(3)
                for dx in range(3)
            ) / 9.0
        return arr

    def smooth_image():
        img = np.stack(
            [smoothed(rng.uniform(0.0, 1.0, (height, width)), 2) for _ in range(3)],
            axis=-1,
        )
        lo, hi = img.min(), img.max()
        return 0.3 + 0.4 * (img - lo) / max(hi - lo, 1e-9)

    image_t = smooth_image()
    image_t1 = smooth_image()

    base = np.stack(
        [smoothed(rng.uniform(-1.0, 1.0, (height, width)), 6) for _ in range(2)],
        axis=-1,
    )
    base *= 2.0 / max(np.abs(base).max(), 1e-9)
    flow_f = base + rng.uniform(-0.5, 0.5, (height, width, 2))
    flow_b = -base + rng.uniform(-0.5, 0.5, (height, width, 2))

    grid = pixel_grid(height, width)
    for _ in range(6):
        r = int(rng.integers(0, height - 3))
        c = int(rng.integers(0, width - 3))
        pr, pc = blocking.PERIPHERAL_OFFSETS[int(rng.integers(0, 12))]
        centroid = np.mean(
            [grid[r + dr, c + dc] + flow_f[r + dr, c + dc] for dr, dc in blocking.MIDDLE_OFFSETS],
            axis=0,
        )
        target = centroid + rng.uniform(-0.2, 0.2, 2)
        flow_f[r + pr, c + pc] = target - grid[r + pr, c + pc]
        # make the backward flow consistent around the landing point so the
        # injected pixel is not occlusion-gated away
        ty = int(round(target[1]))
        tx = int(round(target[0]))
        for oy in (-1, 0):
            for ox in (-1, 0):
                yy = min(max(ty + oy, 0), height - 1)
                xx = min(max(tx + ox, 0), width - 1)
                flow_b[yy, xx] = -flow_f[r + pr, c + pc]
    return image_t, image_t1, flow_f, flow_b


# gradient checks run with a looser occlusion offset so the scene keeps a
# healthy mix of gated and active pairs
GRADCHECK_CONFIG = LossConfig(occlusion=OcclusionParams(0.01, 2.0))


def run_gradcheck(
    loss_name: str,
    probes: int = 100,
    seed: int = 0,
    cfg: LossConfig | None = None,
) -> FDCheckResult:
    """Run the finite-difference check for one loss on the seeded scene."""
    image_t, image_t1, flow_f, flow_b = gradcheck_scene(seed)
    return finite_diff_check(
        loss_name,
        image_t,
        image_t1,
        flow_f,
        flow_b,
        GRADCHECK_CONFIG if cfg is None else cfg,
        probe_count=probes,
        step=GRADCHECK_STEPS[loss_name],
        seed=seed,
    )
