"""Core rasters: coordinate displacement, differentiable bilinear warping,
and forward-backward occlusion estimation.

Array conventions used throughout the package:

* images are ``(H, W, 3)`` float64 arrays with channel values in [0, 1];
* flow fields are ``(H, W, 2)`` float64 arrays, channel 0 is the horizontal
  displacement u (along columns), channel 1 is the vertical displacement v
  (along rows);
* coordinate fields are ``(H, W, 2)`` float64 arrays, channel 0 is the
  continuous column coordinate x, channel 1 the row coordinate y;
* occlusion masks are ``(H, W)`` uint8 arrays, 1 = occluded.

Pixel (i, j) means (row i from the top, column j from the left), so the
position of pixel (i, j) is (x, y) = (j, i) and its flow-displaced target
is (j + u, i + v).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class OcclusionParams:
    """Thresholds of the forward-backward consistency check.

    A pixel is occluded when the squared norm of (forward + warped backward)
    exceeds ``alpha_consistency`` times the sum of the two squared flow norms
    plus ``beta_offset`` (in squared pixels).
    """

    alpha_consistency: float = 0.01
    beta_offset: float = 0.5

    def __post_init__(self):
        if self.alpha_consistency < 0 or self.beta_offset < 0:
            raise ValueError("occlusion thresholds must be non-negative")


def pixel_grid(height: int, width: int) -> np.ndarray:
    """Return the (H, W, 2) integer pixel positions as floats, (x, y) order."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack([xs, ys], axis=-1)


def displace(flow: np.ndarray) -> np.ndarray:
    """Add each pixel's flow vector to its own position.

    Returns the coordinate field of flow targets; values may fall outside
    the image rectangle (that is meaningful and preserved).
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    return pixel_grid(h, w) + flow


def bilinear_weights(coords: np.ndarray, height: int, width: int):
    """Return the four interpolation weights (w00, w01, w10, w11) per pixel.

    w00 belongs to the (floor y, floor x) neighbor, w01 to (floor y, ceil x),
    w10 to (ceil y, floor x) and w11 to (ceil y, ceil x), after border
    clamping. The four weights are non-negative and sum to 1.
    """
    x = np.clip(coords[..., 0], 0.0, width - 1.0)
    y = np.clip(coords[..., 1], 0.0, height - 1.0)
    x0 = np.clip(np.floor(x), 0, max(width - 2, 0))
    y0 = np.clip(np.floor(y), 0, max(height - 2, 0))
    fx = x - x0
    fy = y - y0
    return ((1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx)


def _bilinear_with_grad(source: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Sample ``source`` (H, W, C) at continuous (x, y), border-clamped.

    Returns (values, d/dx, d/dy), each shaped like x with a trailing channel
    axis. The spatial derivatives are zero where the coordinate is clamped.
    """
    h, w = source.shape[:2]
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    # gradient of the clamp: 1 inside the rectangle, 0 beyond it
    in_x = ((x >= 0.0) & (x <= w - 1.0)).astype(np.float64)
    in_y = ((y >= 0.0) & (y <= h - 1.0)).astype(np.float64)

    x0 = np.clip(np.floor(xc).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(yc).astype(np.int64), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]

    v00 = source[y0, x0]
    v01 = source[y0, x1]
    v10 = source[y1, x0]
    v11 = source[y1, x1]

    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    out = top + fy * (bot - top)

    dx = ((1 - fy) * (v01 - v00) + fy * (v11 - v10)) * in_x[..., None]
    dy = ((1 - fx) * (v10 - v00) + fx * (v11 - v01)) * in_y[..., None]
    return out, dx, dy


def _check_sample_args(source: np.ndarray, coords: np.ndarray):
    if source.ndim != 3:
        raise ValueError(f"source must be (H, W, C), got shape {source.shape}")
    if coords.ndim != 3 or coords.shape[2] != 2:
        raise ValueError(f"coords must be (H, W, 2), got shape {coords.shape}")
    if coords.shape[:2] != source.shape[:2]:
        raise ValueError(
            f"coords spatial size {coords.shape[:2]} does not match "
            f"source {source.shape[:2]}"
        )


def bilinear_sample(source: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Bilinearly interpolate ``source`` at ``coords`` (border-clamped)."""
    source = np.asarray(source, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.float64)
    _check_sample_args(source, coords)
    out, _, _ = _bilinear_with_grad(source, coords[..., 0], coords[..., 1])
    return out


def bilinear_sample_with_grad(source: np.ndarray, coords: np.ndarray):
    """Like :func:`bilinear_sample` but also return the exact partial
    derivatives of every output value with respect to the x and y coordinate.
    """
    source = np.asarray(source, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.float64)
    _check_sample_args(source, coords)
    return _bilinear_with_grad(source, coords[..., 0], coords[..., 1])


def warp(source: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Reconstruct the reference frame by sampling ``source`` at the
    flow-displaced coordinates.

    With ``source`` the next frame and ``flow`` the forward flow of the
    current frame, the result is the warped image that photometric losses
    compare against the current frame.
    """
    source = np.asarray(source, dtype=np.float64)
    flow = np.asarray(flow, dtype=np.float64)
    if source.shape[:2] != flow.shape[:2]:
        raise ValueError(
            f"source {source.shape[:2]} and flow {flow.shape[:2]} sizes differ"
        )
    return bilinear_sample(source, displace(flow))


def out_of_frame(coords: np.ndarray, height: int, width: int) -> np.ndarray:
    """Boolean mask of coordinates strictly outside [0, W-1] x [0, H-1]."""
    x = coords[..., 0]
    y = coords[..., 1]
    return (x < 0.0) | (x > width - 1.0) | (y < 0.0) | (y > height - 1.0)


def occlusion_mask(
    forward: np.ndarray,
    backward: np.ndarray,
    params: OcclusionParams | None = None,
) -> np.ndarray:
    """Estimate the occlusion mask of the forward direction.

    The backward flow is sampled at each pixel's forward target; the pixel is
    occluded when forward and sampled backward flow fail the consistency
    inequality, or when its target leaves the frame.
    """
    if params is None:
        params = OcclusionParams()
    forward = np.asarray(forward, dtype=np.float64)
    backward = np.asarray(backward, dtype=np.float64)
    if forward.shape != backward.shape:
        raise ValueError(
            f"forward {forward.shape} and backward {backward.shape} differ"
        )
    h, w = forward.shape[:2]
    coords = displace(forward)
    backward_warped = bilinear_sample(backward, coords)

    sq = lambda a: np.sum(a * a, axis=-1)
    lhs = sq(forward + backward_warped)
    rhs = (
        params.alpha_consistency * (sq(forward) + sq(backward_warped))
        + params.beta_offset
    )
    occluded = (lhs > rhs) | out_of_frame(coords, h, w)
    return occluded.astype(np.uint8)
