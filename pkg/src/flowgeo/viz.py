"""Color-wheel rendering of flow fields.

Hue encodes the flow direction, saturation the magnitude relative to a
normalization magnitude (99th percentile by default); zero flow renders
white. Output channels always lie in [0, 1].
"""

from __future__ import annotations

import numpy as np


def _make_colorwheel() -> np.ndarray:
    """55-entry RGB wheel with the customary sector sizes, values in [0, 1]."""

    def sector(n, hold, ramp, up):
        block = np.zeros((n, 3))
        block[:, hold] = 1.0
        r = np.arange(n) / n
        block[:, ramp] = r if up else 1.0 - r
        return block

    return np.vstack(
        [
            sector(15, 0, 1, True),   # red -> yellow
            sector(6, 1, 0, False),   # yellow -> green
            sector(4, 1, 2, True),    # green -> cyan
            sector(11, 2, 1, False),  # cyan -> blue
            sector(13, 2, 0, True),   # blue -> magenta
            sector(6, 0, 2, False),   # magenta -> red
        ]
    )


_WHEEL = _make_colorwheel()


def flow_to_color(flow: np.ndarray, max_magnitude: float | None = None) -> np.ndarray:
    """Render a flow field as an (H, W, 3) float image in [0, 1].

    ``max_magnitude`` sets the flow length mapped to full saturation; when
    omitted, the 99th-percentile magnitude of the field is used. Longer
    vectors render at reduced brightness.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    u = flow[..., 0]
    v = flow[..., 1]
    rad = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = float(np.percentile(rad, 99.0))
    norm = max(max_magnitude, 1e-12)
    r = rad / norm

    ncols = _WHEEL.shape[0]
    angle = np.arctan2(-v, -u) / np.pi  # in [-1, 1]
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % ncols
    f = fk - k0

    out = np.empty(flow.shape[:2] + (3,), dtype=np.float64)
    small = r <= 1.0
    for c in range(3):
        col0 = _WHEEL[k0, c]
        col1 = _WHEEL[k1, c]
        col = (1.0 - f) * col0 + f * col1
        col = np.where(small, 1.0 - r * (1.0 - col), col * 0.75)
        out[..., c] = col
    return np.clip(out, 0.0, 1.0)
