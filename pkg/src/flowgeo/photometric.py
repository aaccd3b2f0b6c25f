"""Census-based photometric consistency loss and edge-aware smoothness loss,
both with analytic gradients with respect to the flow.

The census loss compares per-pixel census signatures of the reference frame
and of the warped opposite frame through a soft Hamming distance and a
concave robust penalty; occlusion masks gate every term and are constants
under differentiation (gradients flow through the warp only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import bilinear_sample_with_grad, displace

# soft-binarization scale of census differences (squared), and the soft
# Hamming threshold; both in [0,1] intensity units
CENSUS_BIN_SQ = 0.0081
SOFT_HAMMING_THRESH = 0.1


@dataclass
class RobustLossParams:
    """Concave magnitude transform (|x| + epsilon) ** exponent."""

    epsilon: float = 0.01
    exponent: float = 0.4

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.exponent <= 1:
            raise ValueError("exponent must be in (0, 1]")


@dataclass
class SmoothnessParams:
    """Edge weight coefficient and difference order of the smoothness loss."""

    edge_weight: float = 150.0
    order: int = 1

    def __post_init__(self):
        if self.edge_weight < 0:
            raise ValueError("edge_weight must be non-negative")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")


def robust_penalty(x, params: RobustLossParams | None = None):
    """(|x| + epsilon) ** exponent, elementwise; monotone in |x| and even."""
    if params is None:
        params = RobustLossParams()
    return (np.abs(x) + params.epsilon) ** params.exponent


def _gray(image: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=np.float64).mean(axis=2)


def _patch_offsets(radius: int):
    return [(dy, dx) for dy in range(2 * radius + 1) for dx in range(2 * radius + 1)]


def _census_of_gray(gray: np.ndarray, radius: int):
    """Signatures and raw neighbor differences of a grayscale raster."""
    h, w = gray.shape
    padded = np.pad(gray, radius, mode="edge")
    offsets = _patch_offsets(radius)
    diffs = np.empty((h, w, len(offsets)), dtype=np.float64)
    for k, (dy, dx) in enumerate(offsets):
        diffs[:, :, k] = padded[dy : dy + h, dx : dx + w] - gray
    sig = diffs / np.sqrt(CENSUS_BIN_SQ + diffs * diffs)
    return sig, diffs


def census_transform(image: np.ndarray, radius: int = 1) -> np.ndarray:
    """Per-pixel signature of soft-binarized intensity differences.

    Entry k holds (g(q) - g(p)) / sqrt(0.0081 + (g(q) - g(p))^2) for the k-th
    neighbor q of pixel p in the (2*radius+1)^2 patch (row-major, border
    replicated), with g the channel mean. Every entry lies in (-1, 1) and
    the signature is invariant to global brightness shifts.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    sig, _ = _census_of_gray(_gray(image), radius)
    return sig


def _fold_edge_pad(padded_bar: np.ndarray, radius: int) -> np.ndarray:
    """Adjoint of np.pad(gray, radius, mode='edge')."""
    h2, w2 = padded_bar.shape
    tmp = padded_bar.copy()
    tmp[radius] += tmp[:radius].sum(axis=0)
    tmp[h2 - radius - 1] += tmp[h2 - radius :].sum(axis=0)
    tmp = tmp[radius : h2 - radius]
    tmp[:, radius] += tmp[:, :radius].sum(axis=1)
    tmp[:, w2 - radius - 1] += tmp[:, w2 - radius :].sum(axis=1)
    return tmp[:, radius : w2 - radius]


def _census_direction(reference, source, flow, occ, params, radius):
    """One direction of the census loss: compare ``reference`` against
    ``source`` warped by ``flow``. Returns (loss, d loss / d flow)."""
    h, w = reference.shape[:2]
    coords = displace(flow)
    warped, dwx, dwy = bilinear_sample_with_grad(source, coords)

    sig_ref, _ = _census_of_gray(_gray(reference), radius)
    gray_w = warped.mean(axis=2)
    sig_w, diffs_w = _census_of_gray(gray_w, radius)

    t = sig_ref - sig_w
    tsq = t * t
    rho = (tsq / (SOFT_HAMMING_THRESH + tsq)).sum(axis=2)

    keep = (occ == 0).astype(np.float64)
    n = max(1.0, keep.sum())
    loss = float((keep * robust_penalty(rho, params)).sum() / n)

    # backward pass; the mask and its count are constants
    q, eps = params.exponent, params.epsilon
    rho_bar = keep * q * (rho + eps) ** (q - 1.0) / n
    t_bar = rho_bar[:, :, None] * (
        2.0 * SOFT_HAMMING_THRESH * t / (SOFT_HAMMING_THRESH + tsq) ** 2
    )
    d_bar = -t_bar * (CENSUS_BIN_SQ / (CENSUS_BIN_SQ + diffs_w * diffs_w) ** 1.5)

    padded_bar = np.zeros((h + 2 * radius, w + 2 * radius), dtype=np.float64)
    for k, (dy, dx) in enumerate(_patch_offsets(radius)):
        padded_bar[dy : dy + h, dx : dx + w] += d_bar[:, :, k]
    gray_bar = _fold_edge_pad(padded_bar, radius) - d_bar.sum(axis=2)

    warped_bar = gray_bar / 3.0
    grad = np.stack(
        [warped_bar * dwx.sum(axis=2), warped_bar * dwy.sum(axis=2)], axis=-1
    )
    return loss, grad


def census_loss(
    image_t,
    image_t1,
    flow_forward,
    flow_backward,
    occ_forward,
    occ_backward,
    params: RobustLossParams | None = None,
    radius: int = 1,
):
    """Two-direction census consistency loss.

    Each direction warps the opposite frame to the reference frame, takes the
    soft Hamming distance between census signatures, applies the robust
    penalty, and averages over non-occluded pixels. Returns the scalar loss
    and its gradients with respect to the forward and backward flow.
    """
    if params is None:
        params = RobustLossParams()
    shapes = {
        np.asarray(a).shape[:2]
        for a in (image_t, image_t1, flow_forward, flow_backward, occ_forward, occ_backward)
    }
    if len(shapes) != 1:
        raise ValueError(f"census_loss inputs disagree on spatial size: {shapes}")
    image_t = np.asarray(image_t, dtype=np.float64)
    image_t1 = np.asarray(image_t1, dtype=np.float64)
    flow_forward = np.asarray(flow_forward, dtype=np.float64)
    flow_backward = np.asarray(flow_backward, dtype=np.float64)

    loss_f, grad_f = _census_direction(
        image_t, image_t1, flow_forward, occ_forward, params, radius
    )
    loss_b, grad_b = _census_direction(
        image_t1, image_t, flow_backward, occ_backward, params, radius
    )
    return loss_f + loss_b, grad_f, grad_b


def _axis_sites(shape, order, axis):
    h, w = shape
    return (h - order) * w if axis == 0 else h * (w - order)


def smoothness_loss(
    flow: np.ndarray,
    image: np.ndarray,
    params: SmoothnessParams | None = None,
):
    """Edge-aware k-th order smoothness loss with its exact subgradient.

    Forward differences along rows and columns; sites without a full stencil
    are dropped and the sum is divided by the number of included
    (pixel, direction) sites. The image edge weight always uses the
    first-order image difference at the site's base pixel. sign(0) = 0.
    """
    if params is None:
        params = SmoothnessParams()
    flow = np.asarray(flow, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    if flow.shape[:2] != image.shape[:2]:
        raise ValueError(
            f"flow {flow.shape[:2]} and image {image.shape[:2]} sizes differ"
        )
    k = params.order
    grad = np.zeros_like(flow)
    total = 0.0
    n_sites = 0
    per_axis = []
    for axis in (0, 1):
        img_diff = np.abs(np.diff(image, axis=axis)).sum(axis=2)
        weight = np.exp(-(params.edge_weight / 3.0) * img_diff)
        d = np.diff(flow, n=k, axis=axis)
        if k == 2:
            weight = weight[: d.shape[0], : d.shape[1]]
        total += float((np.abs(d).sum(axis=2) * weight).sum())
        n_sites += _axis_sites(flow.shape[:2], k, axis)
        per_axis.append((axis, d, weight))

    loss = total / n_sites
    for axis, d, weight in per_axis:
        s = np.sign(d) * weight[:, :, None] / n_sites
        if k == 1:
            if axis == 0:
                grad[1:] += s
                grad[:-1] -= s
            else:
                grad[:, 1:] += s
                grad[:, :-1] -= s
        else:
            if axis == 0:
                grad[:-2] += s
                grad[1:-1] -= 2.0 * s
                grad[2:] += s
            else:
                grad[:, :-2] += s
                grad[:, 1:-1] -= 2.0 * s
                grad[:, 2:] += s
    return loss, grad
