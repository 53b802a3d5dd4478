"""Centerline extraction for small tubular structures in 3-D scalar volumes.

High-contrast vessel segments are traced iteratively from a seed using the
local gradient field of a vessel-enhanced volume; low-contrast segments are
recovered as minimum-cost paths between two voxels.  Synthetic tube phantoms
and sparse-landmark metrics provide the verification bedrock, and a CLI plus
a small HTTP service wrap the pipeline for batch and interactive use.
"""

from .errors import (
    ComputeError,
    DataError,
    GeometryMismatchError,
    OutOfBoundsError,
    VesselTraceError,
)
from .metrics import LandmarkSet, PathMetrics, evaluate, point_to_polyline
from .minpath import (
    SigmoidParams,
    VoxelPath,
    astar,
    build_cost_volume,
    dijkstra_oracle,
    refine_path,
    sigmoid_transfer,
)
from .phantom import (
    CenterlineSampler,
    HelixCurve,
    SlabSpec,
    SplineCurve,
    StraightCurve,
    TubeSpec,
    generate,
)
from .tracker import (
    Centerline,
    FasciaMask,
    TrackerConfig,
    clamp_direction,
    estimate_direction,
    extract_cross_section,
    ridge_correct,
    track,
)
from .vesselness import (
    PRESETS,
    EigenTriple,
    FrangiParams,
    eig3_symmetric,
    enhance_volume,
    frangi_vesselness,
    normalize_vesselness,
)
from .volume import (
    Volume,
    WindowParams,
    gradient_at,
    hessian_at_scale,
    load_nrrd,
    load_volume,
    normalize_hu,
    sample_trilinear,
    save_volume,
)

__version__ = "0.1.0"

__all__ = [
    "Centerline",
    "CenterlineSampler",
    "ComputeError",
    "DataError",
    "EigenTriple",
    "FasciaMask",
    "FrangiParams",
    "GeometryMismatchError",
    "HelixCurve",
    "LandmarkSet",
    "OutOfBoundsError",
    "PathMetrics",
    "PRESETS",
    "SigmoidParams",
    "SlabSpec",
    "SplineCurve",
    "StraightCurve",
    "TrackerConfig",
    "TubeSpec",
    "VesselTraceError",
    "Volume",
    "VoxelPath",
    "WindowParams",
    "astar",
    "build_cost_volume",
    "clamp_direction",
    "dijkstra_oracle",
    "eig3_symmetric",
    "enhance_volume",
    "estimate_direction",
    "evaluate",
    "extract_cross_section",
    "frangi_vesselness",
    "generate",
    "gradient_at",
    "hessian_at_scale",
    "load_nrrd",
    "load_volume",
    "normalize_hu",
    "normalize_vesselness",
    "point_to_polyline",
    "refine_path",
    "ridge_correct",
    "sample_trilinear",
    "save_volume",
    "sigmoid_transfer",
    "track",
]
