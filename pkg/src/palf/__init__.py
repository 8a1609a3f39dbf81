"""Point-cloud Annotation with LiDAR-camera Fusion: pre-annotation box
fitting, camera cross-checking, and annotation-quality evaluation."""

from .errors import (
    CalibrationMismatchWarning,
    DataWarning,
    DegenerateFitError,
    FormatError,
    NotFoundError,
    UpstreamDataError,
    ValidationError,
)
from .geometry import (
    Box2D,
    Box3D,
    box3d_corners,
    iou2d,
    iou3d,
    normalize_yaw,
    points_in_box,
    project_box3d_to_rect,
    project_points,
)
from .kitti_io import (
    AnnotationSession,
    Calibration,
    Detection2D,
    Detection3D,
    DetectionSet,
    PointCloud,
    SessionBox,
    TimingEvent,
    load_calibration,
    load_detections,
    load_kitti_labels,
    load_point_cloud,
    load_session,
    save_detections,
    save_point_cloud,
    save_session,
)
from .assignment import CostMatrix, Matching, build_cost_matrix, solve_assignment
from .preannotate import PreannotateConfig, PreannotatedBox, expand_for_crop, fit_box, preannotate_frame
from .fusion import FusionConfig, FusionReport, backproject_missed, fuse_frame
from .evaluation import (
    MatchResult,
    MetricsReport,
    compute_metrics,
    format_table,
    match_to_ground_truth,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotationSession",
    "Box2D",
    "Box3D",
    "Calibration",
    "CalibrationMismatchWarning",
    "CostMatrix",
    "DataWarning",
    "DegenerateFitError",
    "Detection2D",
    "Detection3D",
    "DetectionSet",
    "FormatError",
    "FusionConfig",
    "FusionReport",
    "MatchResult",
    "Matching",
    "MetricsReport",
    "NotFoundError",
    "PointCloud",
    "PreannotateConfig",
    "PreannotatedBox",
    "SessionBox",
    "TimingEvent",
    "UpstreamDataError",
    "ValidationError",
    "backproject_missed",
    "box3d_corners",
    "build_cost_matrix",
    "compute_metrics",
    "expand_for_crop",
    "fit_box",
    "format_table",
    "fuse_frame",
    "iou2d",
    "iou3d",
    "load_calibration",
    "load_detections",
    "load_kitti_labels",
    "load_point_cloud",
    "load_session",
    "match_to_ground_truth",
    "normalize_yaw",
    "points_in_box",
    "preannotate_frame",
    "project_box3d_to_rect",
    "project_points",
    "save_detections",
    "save_point_cloud",
    "save_session",
    "solve_assignment",
    "__version__",
]
