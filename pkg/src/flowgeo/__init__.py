"""Dense optical-flow loss toolkit with geometric non-intersection and
non-blocking terms, direct flow optimization, and evaluation utilities."""

from .core import (
    OcclusionParams,
    bilinear_sample,
    bilinear_sample_with_grad,
    bilinear_weights,
    displace,
    occlusion_mask,
    pixel_grid,
    warp,
)
from .photometric import (
    RobustLossParams,
    SmoothnessParams,
    census_loss,
    census_transform,
    robust_penalty,
    smoothness_loss,
)
from .intersection import (
    IntersectCoeffs,
    coefficient_crossing,
    color_weight,
    crossing_count,
    intersection_coeffs,
    non_intersection_loss,
    unit_intersection_loss,
)
from .blocking import (
    QuadMembership,
    cross2,
    in_quadrilateral,
    in_triangle,
    non_blocking_loss,
    point_segment_distance,
    unit_blocking_loss,
)
from .optimize import (
    AdamState,
    FDCheckResult,
    LossBreakdown,
    LossConfig,
    OptimizeConfig,
    OptimizeResult,
    adam_step,
    downsample_image,
    finite_diff_check,
    load_config,
    optimize_flow_pair,
    total_loss,
    upsample_flow,
)
from .metrics import FlowEvalResult, endpoint_error
from .fileio import read_flo, read_image, write_flo, write_image
from .viz import flow_to_color

__version__ = "0.1.0"
