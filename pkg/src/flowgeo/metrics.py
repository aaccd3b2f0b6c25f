"""Endpoint-error statistics over a validity mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class FlowEvalResult:
    epe_mean: float
    epe_mean_noc: float
    error_rate: float  # percent of valid pixels that are outliers
    valid_count: int


def endpoint_error(
    flow: np.ndarray,
    gt: np.ndarray,
    valid: np.ndarray | None = None,
    occluded: np.ndarray | None = None,
) -> FlowEvalResult:
    """Mean endpoint error and outlier rate of ``flow`` against ``gt``.

    ``valid`` marks pixels where ground truth exists (all pixels when
    omitted). ``occluded`` (1 = occluded) restricts ``epe_mean_noc`` to
    non-occluded valid pixels; without it, epe_mean_noc equals epe_mean.
    A pixel is an outlier when its endpoint error exceeds 3 px and 5% of
    the ground-truth magnitude. Raises ValueError when no pixel is valid;
    epe_mean_noc is nan when the non-occluded valid set is empty.
    """
    flow = np.asarray(flow, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if flow.shape != gt.shape:
        raise ValueError(f"flow {flow.shape} and gt {gt.shape} shapes differ")

    ee = np.linalg.norm(flow - gt, axis=-1)
    if valid is None:
        vmask = np.ones(ee.shape, dtype=bool)
    else:
        if valid.shape != ee.shape:
            raise ValueError(f"valid mask {valid.shape} does not match {ee.shape}")
        vmask = np.asarray(valid) != 0
    count = int(vmask.sum())
    if count == 0:
        raise ValueError("no valid pixels to evaluate")

    epe_mean = float(ee[vmask].mean())
    if occluded is None:
        epe_mean_noc = epe_mean
    else:
        noc = vmask & (np.asarray(occluded) == 0)
        epe_mean_noc = float(ee[noc].mean()) if noc.any() else float("nan")

    gt_mag = np.linalg.norm(gt, axis=-1)
    outlier = (ee > 3.0) & (ee > 0.05 * gt_mag)
    error_rate = float(100.0 * outlier[vmask].mean())
    return FlowEvalResult(epe_mean, epe_mean_noc, error_rate, count)
