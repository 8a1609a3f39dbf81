"""Camera-LiDAR late fusion: cross-check 3D boxes against 2D detections.

Each in-view 3D box is projected to an image rectangle and matched one-to-one
against the frame's 2D detections (min-cost assignment on pixel center
distance).  Matches with enough rectangle overlap confirm the 3D box; weak
or absent matches flag it as wrong; 2D detections left without a 3D partner
become missed-object hints, back-projected into the point cloud so the
annotator can see where to look.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CalibrationMismatchWarning
from .geometry import (
    Box2D,
    Box3D,
    iou2d,
    points_in_box,
    project_box3d_to_rect,
    project_points,
)
from .assignment import CostMatrix, solve_assignment
from .kitti_io import Calibration, Detection2D, PointCloud

FUSION_SCHEMA_VERSION = 1

WRONG_LOW_IOU = "low_iou"
WRONG_UNMATCHED_3D = "unmatched_3d"


@dataclass(frozen=True)
class FusionConfig:
    iou2d_threshold: float = 0.5
    max_center_distance_px: Optional[float] = None
    min_2d_score: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.iou2d_threshold <= 1.0):
            raise ValueError("iou2d_threshold must be in [0, 1]")
        if self.max_center_distance_px is not None and self.max_center_distance_px <= 0:
            raise ValueError("max_center_distance_px must be positive when set")


@dataclass(frozen=True)
class ConfirmedPair:
    box3d_id: int
    box2d_id: int
    iou2d: float


@dataclass(frozen=True)
class WrongBox:
    box3d_id: int
    reason: str  # low_iou | unmatched_3d
    iou2d: Optional[float] = None


@dataclass(frozen=True)
class MissedDetection:
    box2d_id: int
    rect: Box2D


@dataclass
class FusionReport:
    confirmed: list[ConfirmedPair] = field(default_factory=list)
    wrong: list[WrongBox] = field(default_factory=list)
    missed: list[MissedDetection] = field(default_factory=list)
    out_of_view: list[int] = field(default_factory=list)
    highlighted_wrong_points: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    highlighted_missed_points: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    missed_image_regions: list[Box2D] = field(default_factory=list)
    # extension fields, not part of the core classification
    class_mismatches: list[tuple[int, int]] = field(default_factory=list)
    calibration_warning: Optional[str] = None

    def to_dict(self) -> dict:
        doc = {
            "palf_fusion": FUSION_SCHEMA_VERSION,
            "confirmed": [
                {"box3d_id": p.box3d_id, "box2d_id": p.box2d_id, "iou2d": p.iou2d}
                for p in self.confirmed
            ],
            "wrong": [
                {"box3d_id": w.box3d_id, "reason": w.reason, "iou2d": w.iou2d}
                for w in self.wrong
            ],
            "missed": [
                {"box2d_id": m.box2d_id, "rect": m.rect.as_list()} for m in self.missed
            ],
            "out_of_view": list(self.out_of_view),
            "highlighted_wrong_points": [int(i) for i in self.highlighted_wrong_points],
            "highlighted_missed_points": [int(i) for i in self.highlighted_missed_points],
            "missed_image_regions": [r.as_list() for r in self.missed_image_regions],
            "class_mismatches": [list(pair) for pair in self.class_mismatches],
        }
        if self.calibration_warning is not None:
            doc["calibration_warning"] = self.calibration_warning
        return doc


def backproject_missed(cloud: PointCloud, calib: Calibration, rects: Sequence[Box2D]) -> np.ndarray:
    """Indices of points whose in-image projection lands inside any rect.

    Points behind the camera or outside the image are never selected; the
    rect boundary itself counts as inside.
    """
    if not rects:
        return np.zeros(0, dtype=int)
    proj = project_points(calib, cloud)
    hit = np.zeros(len(proj.valid), dtype=bool)
    u, v = proj.u, proj.v
    for rect in rects:
        with np.errstate(invalid="ignore"):
            inside = (u >= rect.xmin) & (u <= rect.xmax) & (v >= rect.ymin) & (v <= rect.ymax)
        hit |= proj.valid & inside
    return np.flatnonzero(hit)


def _unpack_boxes3d(boxes3d) -> tuple[list[Box3D], list[Optional[str]]]:
    geoms: list[Box3D] = []
    labels: list[Optional[str]] = []
    for item in boxes3d:
        if isinstance(item, Box3D):
            geoms.append(item)
            labels.append(None)
        else:
            geoms.append(item.box)
            labels.append(getattr(item, "class_label", None))
    return geoms, labels


def fuse_frame(
    cloud: PointCloud,
    calib: Calibration,
    boxes3d: Sequence,
    dets2d: Sequence[Detection2D],
    cfg: FusionConfig = FusionConfig(),
) -> FusionReport:
    """Classify a frame's 3D boxes against its 2D detections.

    boxes3d entries may be bare Box3D values or carriers with .box and
    .class_label (detections, session boxes); ids in the report index into
    the input sequences as given.
    """
    geoms, labels = _unpack_boxes3d(boxes3d)
    eligible = [(j, det) for j, det in enumerate(dets2d) if det.score >= cfg.min_2d_score]

    report = FusionReport()
    in_view: list[tuple[int, Box2D]] = []
    for i, box in enumerate(geoms):
        rect = project_box3d_to_rect(calib, box)
        if rect is None:
            report.out_of_view.append(i)
        else:
            in_view.append((i, rect))

    if geoms and not in_view and eligible and any(b.position[0] > 0 for b in geoms):
        report.calibration_warning = (
            "every 3D box projects outside the image while 2D detections exist; "
            "the calibration may not belong to this frame"
        )
        warnings.warn(report.calibration_warning, CalibrationMismatchWarning, stacklevel=2)

    centers3d = [((r.xmin + r.xmax) / 2.0, (r.ymin + r.ymax) / 2.0, 0.0) for _, r in in_view]
    centers2d = [(*det.box.center, 0.0) for _, det in eligible]
    if centers3d and centers2d:
        diff = np.asarray(centers3d)[:, None, :] - np.asarray(centers2d)[None, :, :]
        costs = CostMatrix(np.sqrt((diff * diff).sum(axis=2)))
        matching = solve_assignment(costs, max_cost=cfg.max_center_distance_px)
    else:
        matching = solve_assignment(CostMatrix(np.zeros((len(centers3d), len(centers2d)))))

    missed_ids: list[tuple[int, Box2D]] = []
    for r, c in matching.pairs:
        i, rect3d = in_view[r]
        j, det = eligible[c]
        overlap = iou2d(rect3d, det.box)
        if overlap >= cfg.iou2d_threshold:
            report.confirmed.append(ConfirmedPair(box3d_id=i, box2d_id=j, iou2d=overlap))
        else:
            report.wrong.append(WrongBox(box3d_id=i, reason=WRONG_LOW_IOU, iou2d=overlap))
            missed_ids.append((j, det.box))
        if labels[i] is not None and labels[i] != det.class_label:
            report.class_mismatches.append((i, j))
    for r in matching.unmatched_rows:
        report.wrong.append(WrongBox(box3d_id=in_view[r][0], reason=WRONG_UNMATCHED_3D))
    for c in matching.unmatched_cols:
        j, det = eligible[c]
        missed_ids.append((j, det.box))

    report.confirmed.sort(key=lambda p: p.box3d_id)
    report.wrong.sort(key=lambda w: w.box3d_id)
    missed_ids.sort(key=lambda m: m[0])
    report.missed = [MissedDetection(box2d_id=j, rect=rect) for j, rect in missed_ids]
    report.missed_image_regions = [m.rect for m in report.missed]

    wrong_points: set[int] = set()
    for w in report.wrong:
        wrong_points.update(points_in_box(cloud, geoms[w.box3d_id]).tolist())
    report.highlighted_wrong_points = np.array(sorted(wrong_points), dtype=int)
    report.highlighted_missed_points = backproject_missed(
        cloud, calib, [m.rect for m in report.missed]
    )
    return report
