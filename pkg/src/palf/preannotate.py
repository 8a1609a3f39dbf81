"""Pre-annotation: refine raw 3D detections into tight boxes.

Each detection above the score cutoff is either passed through untouched
(sparse crop) or re-fit to the points it covers: split off a ground band,
search yaw for the minimum-area bounding rectangle, and shrink extents to
the points.  Fitting never drops an object; degenerate fits fall back to
the detector box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateFitError
from .geometry import Box3D, normalize_yaw, rotation2d
from .kitti_io import AnnotationSession, Detection3D, PointCloud, SessionBox

MIN_EXTENT_M = 0.05


@dataclass(frozen=True)
class PreannotateConfig:
    point_threshold: int = 20
    crop_margin_m: float = 0.3
    yaw_search_halfwidth_rad: float = math.pi / 4
    yaw_step_rad: float = math.pi / 180
    ground_band_m: float = 0.2
    min_score: float = 0.3

    def __post_init__(self):
        if self.point_threshold < 0:
            raise ValueError("point_threshold must be >= 0")
        if self.crop_margin_m <= 0 or self.yaw_step_rad <= 0 or self.ground_band_m <= 0:
            raise ValueError("margins and steps must be strictly positive")
        if self.yaw_search_halfwidth_rad <= 0:
            raise ValueError("yaw_search_halfwidth_rad must be strictly positive")
        if self.yaw_step_rad > self.yaw_search_halfwidth_rad:
            raise ValueError("yaw_step_rad must not exceed yaw_search_halfwidth_rad")


@dataclass
class PreannotatedBox:
    """One output of the pre-annotation stage: a box plus its provenance."""

    box: Box3D
    class_label: str = "Car"
    score: float = 1.0
    status: str = "pre_annotated"
    refit: bool = False


def expand_for_crop(seed: Box3D, margin: float) -> Box3D:
    """Grow a seed box by margin on every lateral side and upward only.

    Downward growth is deliberately excluded: it would pull road points into
    the crop and corrupt the ground split.
    """
    l, w, h = seed.scale
    x, y, z = seed.position
    return Box3D(
        position=(x, y, z + margin / 2.0),
        scale=(l + 2.0 * margin, w + 2.0 * margin, h + margin),
        yaw=seed.yaw,
    )


def _crop_mask(pts: np.ndarray, seed: Box3D, margin: float) -> np.ndarray:
    """Membership mask for the expanded crop of expand_for_crop.

    Computed directly against the seed's own bottom value: the crop floor and
    the seed floor must coincide exactly, and deriving the floor from a
    shifted center loses that equality to rounding, which can silently drop
    every point resting on the bottom face.
    """
    x, y, z = seed.position
    l, w, h = seed.scale
    cos, sin = math.cos(seed.yaw), math.sin(seed.yaw)
    dx = pts[:, 0] - x
    dy = pts[:, 1] - y
    xr = dx * cos + dy * sin
    yr = dy * cos - dx * sin
    zs = pts[:, 2]
    return (
        (np.abs(xr) <= l / 2.0 + margin)
        & (np.abs(yr) <= w / 2.0 + margin)
        & (zs >= z - h / 2.0)
        & (zs <= z + h / 2.0 + margin)
    )


def fit_box(cloud: PointCloud, seed: Box3D, cfg: PreannotateConfig) -> Box3D:
    """Tighten a seed box to the points it covers.

    Crop the expanded seed, peel a ground band off the bottom (5th-percentile
    floor plus ground_band_m), then search yaw around the seed for the
    minimum-area bounding rectangle of the remaining points.  Extents come
    from that rectangle and the non-ground z range; the bottom face sits on
    the estimated floor.
    """
    pts = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=float)
    crop = pts[_crop_mask(pts, seed, cfg.crop_margin_m)]
    if crop.shape[0] == 0:
        raise DegenerateFitError("empty crop")
    z_floor = float(np.percentile(crop[:, 2], 5))
    body = crop[crop[:, 2] >= z_floor + cfg.ground_band_m]
    if body.shape[0] < 4:
        raise DegenerateFitError(f"only {body.shape[0]} non-ground points")

    halfwidth = cfg.yaw_search_halfwidth_rad
    offsets = np.arange(-halfwidth, halfwidth + 0.5 * cfg.yaw_step_rad, cfg.yaw_step_rad)
    yaws = seed.yaw + offsets
    cos = np.cos(yaws)
    sin = np.sin(yaws)
    x, y = body[:, 0], body[:, 1]
    # rotate by -yaw: candidate frames where the box would be axis-aligned
    xr = np.outer(cos, x) + np.outer(sin, y)
    yr = np.outer(cos, y) - np.outer(sin, x)
    xmin, xmax = xr.min(axis=1), xr.max(axis=1)
    ymin, ymax = yr.min(axis=1), yr.max(axis=1)
    areas = (xmax - xmin) * (ymax - ymin)
    # primary key: area; ties broken toward the seed yaw, then deterministically
    best = int(np.lexsort((yaws, np.abs(offsets), areas))[0])

    length = float(xmax[best] - xmin[best])
    width = float(ymax[best] - ymin[best])
    top = float(body[:, 2].max())
    height = top - z_floor
    if min(length, width, height) < MIN_EXTENT_M:
        raise DegenerateFitError(
            f"fitted extents ({length:.3f}, {width:.3f}, {height:.3f}) below {MIN_EXTENT_M} m"
        )
    center_rot = np.array(
        [(xmin[best] + xmax[best]) / 2.0, (ymin[best] + ymax[best]) / 2.0]
    )
    center_xy = rotation2d(float(yaws[best])) @ center_rot
    return Box3D(
        position=(float(center_xy[0]), float(center_xy[1]), (top + z_floor) / 2.0),
        scale=(length, width, height),
        yaw=normalize_yaw(float(yaws[best])),
    )


def preannotate_frame(
    cloud: PointCloud,
    detections: Sequence[Detection3D],
    cfg: PreannotateConfig = PreannotateConfig(),
) -> list[PreannotatedBox]:
    """Run the fitting gate over a frame's detections.

    Detections below min_score are dropped.  A detection is re-fit only when
    its expanded crop holds strictly more than point_threshold points;
    otherwise (and on degenerate fits) the detector box passes through
    bit-identical.  Output order follows input order.
    """
    pts = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=float)
    out: list[PreannotatedBox] = []
    for det in detections:
        if det.score < cfg.min_score:
            continue
        crop_count = int(_crop_mask(pts, det.box, cfg.crop_margin_m).sum())
        box = det.box
        refit = False
        if crop_count > cfg.point_threshold:
            try:
                box = fit_box(cloud, det.box, cfg)
                refit = True
            except DegenerateFitError:
                box = det.box
        out.append(
            PreannotatedBox(box=box, class_label=det.class_label, score=det.score, refit=refit)
        )
    return out


def to_session(frame_id: str, boxes: Sequence[PreannotatedBox]) -> AnnotationSession:
    """Wrap pre-annotation output as a fresh annotation session."""
    return AnnotationSession(
        frame_id=frame_id,
        boxes=[
            SessionBox(
                id=f"box_{i:04d}",
                box=b.box,
                class_label=b.class_label,
                status=b.status,
                score=b.score,
            )
            for i, b in enumerate(boxes)
        ],
    )
