"""Objective aggregation, direct Adam optimization of a flow-field pair,
multi-scale initialization, and the finite-difference gradient checker.

Instead of training a network, the flow fields themselves are the
parameters: a coarse-to-fine loop initializes each level from the upsampled
coarser result and runs bias-corrected Adam against the total objective.
Occlusion masks are refreshed periodically and held fixed in between, so
each step optimizes a well-defined objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from . import blocking, intersection
from .core import OcclusionParams, _bilinear_with_grad, displace, occlusion_mask
from .photometric import RobustLossParams, SmoothnessParams, census_loss, smoothness_loss

LOSS_NAMES = ("census", "smooth", "inter", "block")


@dataclass
class LossConfig:
    """Term weights and sub-parameters of the total objective."""

    census_weight: float = 1.0
    smoothness_weight: float = 4.0
    non_intersection_weight: float = 0.01
    non_blocking_weight: float = 0.01
    smoothness: SmoothnessParams = field(default_factory=SmoothnessParams)
    robust: RobustLossParams = field(default_factory=RobustLossParams)
    occlusion: OcclusionParams = field(default_factory=OcclusionParams)

    def __post_init__(self):
        for w in (
            self.census_weight,
            self.smoothness_weight,
            self.non_intersection_weight,
            self.non_blocking_weight,
        ):
            if w < 0:
                raise ValueError("loss weights must be non-negative")


@dataclass
class OptimizeConfig:
    """Adam and schedule settings of the direct flow optimizer."""

    beta1: float = 0.9
    beta2: float = 0.999
    learning_rate: float = 0.05
    adam_epsilon: float = 1e-8
    iterations: int = 200
    levels: int = 3
    occlusion_refresh: int = 25

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.levels < 1 or self.iterations < 1 or self.occlusion_refresh < 1:
            raise ValueError("iterations, levels and refresh must be >= 1")


@dataclass
class LossBreakdown:
    """Unweighted term values, the weighted total, and its flow gradients."""

    census: float
    smoothness: float
    non_intersection: float
    non_blocking: float
    total: float
    grad_forward: np.ndarray | None = None
    grad_backward: np.ndarray | None = None


class TraceRow(NamedTuple):
    step: int
    census: float
    smoothness: float
    non_intersection: float
    non_blocking: float
    total: float


@dataclass
class AdamState:
    """First/second moment rasters of both flow fields plus the step count."""

    m_forward: np.ndarray
    v_forward: np.ndarray
    m_backward: np.ndarray
    v_backward: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamState":
        return cls(
            np.zeros(shape), np.zeros(shape), np.zeros(shape), np.zeros(shape)
        )


@dataclass
class OptimizeResult:
    flow_forward: np.ndarray
    flow_backward: np.ndarray
    occ_forward: np.ndarray
    occ_backward: np.ndarray
    trace: list[TraceRow]


def total_loss(
    image_t: np.ndarray,
    image_t1: np.ndarray,
    flow_forward: np.ndarray,
    flow_backward: np.ndarray,
    cfg: LossConfig | None = None,
    masks: tuple[np.ndarray, np.ndarray] | None = None,
) -> LossBreakdown:
    """Evaluate every term of the objective in both directions.

    ``masks`` may supply precomputed occlusion masks (the optimizer holds
    them fixed between refreshes); otherwise they are estimated from the
    flow pair. Term fields hold the unweighted sums over both directions;
    ``total`` applies the weights, and the gradients are of the total.
    """
    if cfg is None:
        cfg = LossConfig()
    image_t = np.asarray(image_t, dtype=np.float64)
    image_t1 = np.asarray(image_t1, dtype=np.float64)
    flow_forward = np.asarray(flow_forward, dtype=np.float64)
    flow_backward = np.asarray(flow_backward, dtype=np.float64)
    sizes = {
        a.shape[:2] for a in (image_t, image_t1, flow_forward, flow_backward)
    }
    if len(sizes) != 1:
        raise ValueError(f"total_loss inputs disagree on spatial size: {sizes}")

    if masks is None:
        occ_f = occlusion_mask(flow_forward, flow_backward, cfg.occlusion)
        occ_b = occlusion_mask(flow_backward, flow_forward, cfg.occlusion)
    else:
        occ_f, occ_b = masks

    cen, gc_f, gc_b = census_loss(
        image_t, image_t1, flow_forward, flow_backward, occ_f, occ_b, cfg.robust
    )
    sm_f, gs_f = smoothness_loss(flow_forward, image_t, cfg.smoothness)
    sm_b, gs_b = smoothness_loss(flow_backward, image_t1, cfg.smoothness)
    ni_f, gi_f = intersection.non_intersection_loss(
        image_t, flow_forward, occ_f, cfg.robust
    )
    ni_b, gi_b = intersection.non_intersection_loss(
        image_t1, flow_backward, occ_b, cfg.robust
    )
    nb_f, gb_f = blocking.non_blocking_loss(flow_forward, occ_f)
    nb_b, gb_b = blocking.non_blocking_loss(flow_backward, occ_b)

    smooth = sm_f + sm_b
    ninter = ni_f + ni_b
    nblock = nb_f + nb_b
    total = (
        cfg.census_weight * cen
        + cfg.smoothness_weight * smooth
        + cfg.non_intersection_weight * ninter
        + cfg.non_blocking_weight * nblock
    )
    grad_f = (
        cfg.census_weight * gc_f
        + cfg.smoothness_weight * gs_f
        + cfg.non_intersection_weight * gi_f
        + cfg.non_blocking_weight * gb_f
    )
    grad_b = (
        cfg.census_weight * gc_b
        + cfg.smoothness_weight * gs_b
        + cfg.non_intersection_weight * gi_b
        + cfg.non_blocking_weight * gb_b
    )
    return LossBreakdown(cen, smooth, ninter, nblock, total, grad_f, grad_b)


def adam_step(
    flow_forward: np.ndarray,
    flow_backward: np.ndarray,
    grad_forward: np.ndarray,
    grad_backward: np.ndarray,
    state: AdamState,
    cfg: OptimizeConfig | None = None,
):
    """One bias-corrected Adam update of both flow fields.

    Pure: returns new parameter arrays and a new state, leaving the inputs
    untouched, so identical inputs give bit-identical outputs.
    """
    if cfg is None:
        cfg = OptimizeConfig()
    t = state.step + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t

    def update(p, g, m, v):
        m_new = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v_new = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        step = cfg.learning_rate * (m_new / bc1) / (np.sqrt(v_new / bc2) + cfg.adam_epsilon)
        return p - step, m_new, v_new

    new_f, m_f, v_f = update(flow_forward, grad_forward, state.m_forward, state.v_forward)
    new_b, m_b, v_b = update(flow_backward, grad_backward, state.m_backward, state.v_backward)
    return new_f, new_b, AdamState(m_f, v_f, m_b, v_b, t)


def downsample_image(image: np.ndarray) -> np.ndarray:
    """2x2 box average; odd sizes replicate the last row/column first."""
    a = np.asarray(image, dtype=np.float64)
    if a.shape[0] < 2 or a.shape[1] < 2:
        raise ValueError(f"cannot downsample size {a.shape[:2]}")
    if a.shape[0] % 2:
        a = np.concatenate([a, a[-1:]], axis=0)
    if a.shape[1] % 2:
        a = np.concatenate([a, a[:, -1:]], axis=1)
    return (a[0::2, 0::2] + a[0::2, 1::2] + a[1::2, 0::2] + a[1::2, 1::2]) / 4.0


def upsample_flow(flow: np.ndarray) -> np.ndarray:
    """Bilinear 2x upsample with displacement values doubled."""
    flow = np.asarray(flow, dtype=np.float64)
    h, w = flow.shape[:2]
    xs = (np.arange(2 * w) + 0.5) / 2.0 - 0.5
    ys = (np.arange(2 * h) + 0.5) / 2.0 - 0.5
    gx, gy = np.meshgrid(xs, ys)
    out, _, _ = _bilinear_with_grad(flow, gx, gy)
    return 2.0 * out


def optimize_flow_pair(
    image_t: np.ndarray,
    image_t1: np.ndarray,
    loss_cfg: LossConfig | None = None,
    opt_cfg: OptimizeConfig | None = None,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> OptimizeResult:
    """Directly optimize the forward/backward flow pair for two frames.

    Coarse-to-fine: images are box-downsampled per level, flow starts at
    zero on the coarsest level and each finer level starts from the 2x
    upsampled previous result. When ``init`` supplies full-resolution
    starting flows the pyramid is skipped and optimization runs at full
    resolution only. The loss trace is recorded every step; it is not
    guaranteed to decrease monotonically.
    """
    if loss_cfg is None:
        loss_cfg = LossConfig()
    if opt_cfg is None:
        opt_cfg = OptimizeConfig()
    image_t = np.asarray(image_t, dtype=np.float64)
    image_t1 = np.asarray(image_t1, dtype=np.float64)
    if image_t.shape != image_t1.shape:
        raise ValueError(
            f"frame shapes differ: {image_t.shape} vs {image_t1.shape}"
        )
    h, w = image_t.shape[:2]
    if h < 4 or w < 4:
        raise ValueError(f"frames must be at least 4x4, got {h}x{w}")

    pyramid = [(image_t, image_t1)]
    if init is None:
        while (
            len(pyramid) < opt_cfg.levels
            and (pyramid[-1][0].shape[0] + 1) // 2 >= 8
            and (pyramid[-1][0].shape[1] + 1) // 2 >= 8
        ):
            a, b = pyramid[-1]
            pyramid.append((downsample_image(a), downsample_image(b)))

    flow_f = flow_b = None
    trace: list[TraceRow] = []
    global_step = 0
    for level_t, level_t1 in reversed(pyramid):
        lh, lw = level_t.shape[:2]
        if flow_f is None:
            if init is not None:
                flow_f = np.array(init[0], dtype=np.float64)
                flow_b = np.array(init[1], dtype=np.float64)
                if flow_f.shape[:2] != (lh, lw) or flow_b.shape[:2] != (lh, lw):
                    raise ValueError("init flows must match the frame size")
            else:
                flow_f = np.zeros((lh, lw, 2))
                flow_b = np.zeros((lh, lw, 2))
        else:
            flow_f = upsample_flow(flow_f)[:lh, :lw]
            flow_b = upsample_flow(flow_b)[:lh, :lw]
        state = AdamState.zeros(flow_f.shape)
        masks = None
        for k in range(opt_cfg.iterations):
            if k % opt_cfg.occlusion_refresh == 0:
                masks = (
                    occlusion_mask(flow_f, flow_b, loss_cfg.occlusion),
                    occlusion_mask(flow_b, flow_f, loss_cfg.occlusion),
                )
            bd = total_loss(level_t, level_t1, flow_f, flow_b, loss_cfg, masks=masks)
            if not np.isfinite(bd.total):
                raise FloatingPointError(
                    f"non-finite loss at optimization step {global_step}"
                )
            trace.append(
                TraceRow(
                    global_step,
                    bd.census,
                    bd.smoothness,
                    bd.non_intersection,
                    bd.non_blocking,
                    bd.total,
                )
            )
            flow_f, flow_b, state = adam_step(
                flow_f, flow_b, bd.grad_forward, bd.grad_backward, state, opt_cfg
            )
            global_step += 1

    occ_f = occlusion_mask(flow_f, flow_b, loss_cfg.occlusion)
    occ_b = occlusion_mask(flow_b, flow_f, loss_cfg.occlusion)
    return OptimizeResult(flow_f, flow_b, occ_f, occ_b, trace)


# --- finite-difference gradient verification -------------------------------


@dataclass
class FDCheckResult:
    max_rel_error: float
    worst_location: tuple[str, int, int, int] | None
    probes: int


def _sample_branch_state(flow, source_hw):
    """Discrete bilinear-sampling state: cell indices and in-frame flags."""
    h, w = source_hw
    coords = displace(flow)
    x = coords[..., 0]
    y = coords[..., 1]
    x0 = np.clip(np.floor(np.clip(x, 0, w - 1)), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(np.clip(y, 0, h - 1)), 0, max(h - 2, 0))
    in_x = (x >= 0) & (x <= w - 1)
    in_y = (y >= 0) & (y <= h - 1)
    return np.stack([x0, y0, in_x, in_y]).astype(np.int64)


def _intersection_branch_state(flow, occ):
    states = [
        intersection._pair_fields(flow, occ, dr, dc)[-1]
        for dr, dc in intersection.NEIGHBOR_OFFSETS
    ]
    return np.stack(states).astype(np.int8)


def _blocking_branch_state(flow, occ):
    """Per (unit, peripheral): -1 when inactive, else the index of the
    nearest quad side."""
    h, w = flow.shape[:2]
    pos = np.stack(np.meshgrid(np.arange(w), np.arange(h)), axis=-1) + flow
    uh, uw = h - 3, w - 3
    corners = [
        (pos[dr : dr + uh, dc : dc + uw, 0], pos[dr : dr + uh, dc : dc + uw, 1])
        for dr, dc in blocking.MIDDLE_OFFSETS
    ]
    free = np.ones((uh, uw), dtype=bool)
    if occ is not None:
        for dr, dc in blocking.MIDDLE_OFFSETS:
            free &= occ[dr : dr + uh, dc : dc + uw] == 0
    states = []
    for dr, dc in blocking.PERIPHERAL_OFFSETS:
        px = pos[dr : dr + uh, dc : dc + uw, 0]
        py = pos[dr : dr + uh, dc : dc + uw, 1]
        (ax, ay), (bx, by), (cx, cy), (dx, dy) = corners
        member = (
            blocking._tri_contains(ax, ay, bx, by, cx, cy, px, py)
            | blocking._tri_contains(ax, ay, cx, cy, dx, dy, px, py)
        ) & (
            blocking._tri_contains(ax, ay, bx, by, dx, dy, px, py)
            | blocking._tri_contains(bx, by, cx, cy, dx, dy, px, py)
        )
        gate = member & free
        if occ is not None:
            gate &= occ[dr : dr + uh, dc : dc + uw] == 0
        dists = [
            blocking._segment_distance_fields(
                px, py, corners[i][0], corners[i][1], corners[j][0], corners[j][1]
            )[0]
            for i, j in ((0, 1), (1, 2), (2, 3), (3, 0))
        ]
        nearest = np.argmin(np.stack(dists), axis=0)
        states.append(np.where(gate, nearest, -1).astype(np.int8))
    return np.stack(states)


def _term_closures(
    loss_name: str,
    image_t: np.ndarray,
    image_t1: np.ndarray,
    cfg: LossConfig,
    masks: tuple[np.ndarray, np.ndarray],
):
    """Value/gradient and branch-state closures for one objective term,
    with occlusion masks frozen."""
    occ_f, occ_b = masks
    h, w = image_t.shape[:2]

    if loss_name == "census":

        def value(ff, fb):
            return census_loss(image_t, image_t1, ff, fb, occ_f, occ_b, cfg.robust)

        def state(ff, fb):
            return np.concatenate(
                [_sample_branch_state(ff, (h, w)), _sample_branch_state(fb, (h, w))]
            )

    elif loss_name == "smooth":

        def value(ff, fb):
            lf, gf = smoothness_loss(ff, image_t, cfg.smoothness)
            lb, gb = smoothness_loss(fb, image_t1, cfg.smoothness)
            return lf + lb, gf, gb

        def state(ff, fb):
            k = cfg.smoothness.order
            parts = []
            for f in (ff, fb):
                for axis in (0, 1):
                    parts.append(np.sign(np.diff(f, n=k, axis=axis)).ravel())
            return np.concatenate(parts).astype(np.int8)

    elif loss_name == "inter":

        def value(ff, fb):
            lf, gf = intersection.non_intersection_loss(image_t, ff, occ_f, cfg.robust)
            lb, gb = intersection.non_intersection_loss(image_t1, fb, occ_b, cfg.robust)
            return lf + lb, gf, gb

        def state(ff, fb):
            return np.concatenate(
                [
                    _intersection_branch_state(ff, occ_f).ravel(),
                    _intersection_branch_state(fb, occ_b).ravel(),
                ]
            )

    elif loss_name == "block":

        def value(ff, fb):
            lf, gf = blocking.non_blocking_loss(ff, occ_f)
            lb, gb = blocking.non_blocking_loss(fb, occ_b)
            return lf + lb, gf, gb

        def state(ff, fb):
            return np.concatenate(
                [
                    _blocking_branch_state(ff, occ_f).ravel(),
                    _blocking_branch_state(fb, occ_b).ravel(),
                ]
            )

    else:
        raise ValueError(f"unknown loss {loss_name!r}; expected one of {LOSS_NAMES}")

    return value, state


def finite_diff_check(
    loss_name: str,
    image_t: np.ndarray,
    image_t1: np.ndarray,
    flow_forward: np.ndarray,
    flow_backward: np.ndarray,
    cfg: LossConfig | None = None,
    probe_count: int = 100,
    step: float = 1e-4,
    seed: int = 0,
) -> FDCheckResult:
    """Compare analytic gradient components of one loss term against central
    finite differences at ``probe_count`` random flow components.

    Probes whose two evaluation points straddle a discrete-branch flip
    (sampling cell, crossing indicator, membership or nearest-side choice,
    difference sign) are resampled. Components where both the analytic and
    numeric values are negligible count as zero error.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if cfg is None:
        cfg = LossConfig()
    image_t = np.asarray(image_t, dtype=np.float64)
    image_t1 = np.asarray(image_t1, dtype=np.float64)
    flow_forward = np.asarray(flow_forward, dtype=np.float64)
    flow_backward = np.asarray(flow_backward, dtype=np.float64)
    masks = (
        occlusion_mask(flow_forward, flow_backward, cfg.occlusion),
        occlusion_mask(flow_backward, flow_forward, cfg.occlusion),
    )
    value, state = _term_closures(loss_name, image_t, image_t1, cfg, masks)

    _, grad_f, grad_b = value(flow_forward, flow_backward)
    grads = (grad_f, grad_b)
    flows = (flow_forward, flow_backward)
    names = ("forward", "backward")

    rng = np.random.default_rng(seed)
    h, w = flow_forward.shape[:2]
    # bias most probes toward components where the analytic gradient is
    # active; uniform probes alone would mostly test zeros of sparse losses
    nonzero = [np.argwhere(np.abs(g) > 1e-12) for g in grads]
    n_active = len(nonzero[0]) + len(nonzero[1])
    max_err = 0.0
    worst = None
    accepted = 0
    attempts = 0
    while accepted < probe_count:
        attempts += 1
        if attempts > probe_count * 200:
            raise RuntimeError(
                "could not find enough probes away from branch boundaries"
            )
        if n_active and rng.random() < 0.75:
            pick = int(rng.integers(0, n_active))
            which = 0 if pick < len(nonzero[0]) else 1
            idx = nonzero[which][pick if which == 0 else pick - len(nonzero[0])]
            i, j, ch = (int(v) for v in idx)
        else:
            which = int(rng.integers(0, 2))
            i = int(rng.integers(0, h))
            j = int(rng.integers(0, w))
            ch = int(rng.integers(0, 2))

        plus = [flows[0].copy(), flows[1].copy()]
        minus = [flows[0].copy(), flows[1].copy()]
        plus[which][i, j, ch] += step
        minus[which][i, j, ch] -= step
        if not np.array_equal(state(*plus), state(*minus)):
            continue
        fd = (value(*plus)[0] - value(*minus)[0]) / (2.0 * step)
        analytic = grads[which][i, j, ch]
        denom = max(abs(analytic), abs(fd))
        err = 0.0 if denom < 1e-9 else abs(analytic - fd) / denom
        if err > max_err:
            max_err = err
            worst = (names[which], i, j, ch)
        accepted += 1
    return FDCheckResult(max_err, worst, accepted)


# --- plain-text configuration ----------------------------------------------

_CONFIG_KEYS = (
    "alpha1", "alpha2", "alpha3", "alpha4", "k", "mu", "epsilon", "q",
    "occ_alpha", "occ_beta", "lr", "beta1", "beta2", "iters", "levels",
    "refresh",
)


def load_config(path) -> tuple[LossConfig, OptimizeConfig]:
    """Read ``key = value`` lines (``#`` comments allowed) into configs.

    Recognized keys: alpha1..alpha4 (term weights), k (smoothness order),
    mu (edge weight), epsilon/q (robust penalty), occ_alpha/occ_beta
    (occlusion thresholds), lr, beta1, beta2, iters, levels, refresh.
    """
    values: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = float(val.strip())
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad number {val.strip()!r}") from None

    loss_cfg = LossConfig(
        census_weight=values.get("alpha1", 1.0),
        smoothness_weight=values.get("alpha2", 4.0),
        non_intersection_weight=values.get("alpha3", 0.01),
        non_blocking_weight=values.get("alpha4", 0.01),
        smoothness=SmoothnessParams(
            edge_weight=values.get("mu", 150.0),
            order=int(values.get("k", 1)),
        ),
        robust=RobustLossParams(
            epsilon=values.get("epsilon", 0.01),
            exponent=values.get("q", 0.4),
        ),
        occlusion=OcclusionParams(
            alpha_consistency=values.get("occ_alpha", 0.01),
            beta_offset=values.get("occ_beta", 0.5),
        ),
    )
    opt_cfg = OptimizeConfig(
        beta1=values.get("beta1", 0.9),
        beta2=values.get("beta2", 0.999),
        learning_rate=values.get("lr", 0.05),
        iterations=int(values.get("iters", 200)),
        levels=int(values.get("levels", 3)),
        occlusion_refresh=int(values.get("refresh", 25)),
    )
    return loss_cfg, opt_cfg
