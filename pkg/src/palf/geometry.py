"""Yaw-oriented 3D box math: corners, containment, calibrated projection, IoU.

Boxes live in the LiDAR frame (x forward, y left, z up) and rotate about +z
only.  All operations here are pure functions and safe to call concurrently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

if TYPE_CHECKING:
    from .kitti_io import Calibration

_TWO_PI = 2.0 * math.pi


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (yaw + math.pi) % _TWO_PI - math.pi


@dataclass(frozen=True)
class Box3D:
    """Yaw-oriented cuboid: center position (x, y, z), scale (length, width,
    height), all meters, and yaw in radians about +z (roll = pitch = 0)."""

    position: tuple[float, float, float]
    scale: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self):
        pos = tuple(float(c) for c in self.position)
        scl = tuple(float(c) for c in self.scale)
        if len(pos) != 3 or not all(math.isfinite(c) for c in pos):
            raise ValueError(f"position must be 3 finite numbers, got {self.position!r}")
        if len(scl) != 3 or not all(math.isfinite(c) and c > 0.0 for c in scl):
            raise ValueError(f"scale must be 3 strictly positive numbers, got {self.scale!r}")
        if not math.isfinite(self.yaw):
            raise ValueError(f"yaw must be finite, got {self.yaw!r}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "scale", scl)
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))

    @property
    def volume(self) -> float:
        l, w, h = self.scale
        return l * w * h

    @property
    def z_bottom(self) -> float:
        return self.position[2] - self.scale[2] / 2.0

    @property
    def z_top(self) -> float:
        return self.position[2] + self.scale[2] / 2.0


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned image rectangle in pixels, origin top-left."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"rect coordinates must be finite, got {vals!r}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"rect must have positive extent, got {vals!r}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)

    def as_list(self) -> list[float]:
        return [self.xmin, self.ymin, self.xmax, self.ymax]


@dataclass(frozen=True)
class ImagePoint:
    """A projected point: pixel coordinates plus rectified-camera depth."""

    u: float
    v: float
    depth: float


@dataclass
class ProjectedPoints:
    """Vectorized projection result: per-input pixel coordinates, depth in the
    rectified camera frame, and a validity mask (depth > 0 and inside the
    image).  u/v are NaN where depth is exactly zero."""

    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray
    valid: np.ndarray

    def __len__(self) -> int:
        return int(self.u.shape[0])

    def point(self, i: int) -> ImagePoint:
        return ImagePoint(float(self.u[i]), float(self.v[i]), float(self.depth[i]))


def _as_points(cloud) -> np.ndarray:
    """Accept a PointCloud or a raw (N, 3) array."""
    pts = getattr(cloud, "points", cloud)
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) point array, got shape {pts.shape}")
    return pts


def rotation2d(yaw: float) -> np.ndarray:
    """2x2 counterclockwise rotation about +z."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


# Corner order: bottom face counterclockwise starting in the +x+y quadrant,
# then the top face in the same (x, y) order.
_CORNER_SIGNS = np.array(
    [
        [+1, +1, -1],
        [-1, +1, -1],
        [-1, -1, -1],
        [+1, -1, -1],
        [+1, +1, +1],
        [-1, +1, +1],
        [-1, -1, +1],
        [+1, -1, +1],
    ],
    dtype=float,
)


def box3d_corners(box: Box3D) -> np.ndarray:
    """Return the 8 corners of a box as an (8, 3) array in the LiDAR frame."""
    half = np.asarray(box.scale, dtype=float) / 2.0
    local = _CORNER_SIGNS * half
    rot = rotation2d(box.yaw)
    world = np.empty_like(local)
    world[:, :2] = local[:, :2] @ rot.T
    world[:, 2] = local[:, 2]
    return world + np.asarray(box.position, dtype=float)


def points_in_box(cloud, box: Box3D) -> np.ndarray:
    """Indices of points inside the closed cuboid (boundary points count).

    A point is inside iff rotating (point - center) by -yaw lands within
    [-l/2, l/2] x [-w/2, w/2] x [-h/2, h/2].
    """
    pts = _as_points(cloud)
    if pts.shape[0] == 0:
        return np.empty(0, dtype=int)
    rel = pts - np.asarray(box.position, dtype=float)
    local_xy = rel[:, :2] @ rotation2d(-box.yaw).T
    half = np.asarray(box.scale, dtype=float) / 2.0
    mask = (
        (np.abs(local_xy[:, 0]) <= half[0])
        & (np.abs(local_xy[:, 1]) <= half[1])
        & (np.abs(rel[:, 2]) <= half[2])
    )
    return np.flatnonzero(mask)


def project_points(calib: "Calibration", points) -> ProjectedPoints:
    """Project LiDAR-frame points into the image.

    Chain per point: x_cam = rect_rotation @ (lidar_to_cam @ [x; y; z; 1]),
    then (u*d, v*d, d) = cam_projection @ [x_cam; 1].  A projection is valid
    iff d > 0 and (u, v) lies inside [0, width) x [0, height).
    """
    pts = _as_points(points)
    n = pts.shape[0]
    if n == 0:
        empty = np.empty(0)
        return ProjectedPoints(empty, empty, empty, np.empty(0, dtype=bool))
    hom = np.hstack([pts, np.ones((n, 1))])
    cam = calib.lidar_to_cam @ hom.T            # (3, N)
    rect = calib.rect_rotation @ cam            # (3, N)
    rect_hom = np.vstack([rect, np.ones((1, n))])
    uvw = calib.cam_projection @ rect_hom       # (3, N)
    depth = uvw[2]
    nonzero = depth != 0.0
    u = np.full(n, np.nan)
    v = np.full(n, np.nan)
    np.divide(uvw[0], depth, out=u, where=nonzero)
    np.divide(uvw[1], depth, out=v, where=nonzero)
    width, height = calib.image_size
    valid = nonzero & (depth > 0.0) & (u >= 0.0) & (u < width) & (v >= 0.0) & (v < height)
    return ProjectedPoints(u=u, v=v, depth=depth, valid=valid)


def project_box3d_to_rect(calib: "Calibration", box: Box3D) -> Optional[Box2D]:
    """Project a 3D box into the image: the axis-aligned hull of its corners.

    Returns None when the box is effectively out of view: fewer than 2
    corners in front of the camera, or the hull misses the image, or the
    clipped hull is degenerate (zero width or height).
    """
    proj = project_points(calib, box3d_corners(box))
    front = proj.depth > 0.0
    if int(front.sum()) < 2:
        return None
    u = proj.u[front]
    v = proj.v[front]
    width, height = calib.image_size
    xmin = max(float(u.min()), 0.0)
    xmax = min(float(u.max()), float(width))
    ymin = max(float(v.min()), 0.0)
    ymax = min(float(v.max()), float(height))
    if xmin >= xmax or ymin >= ymax:
        return None
    return Box2D(xmin, ymin, xmax, ymax)


def iou2d(a: Box2D, b: Box2D) -> float:
    """Intersection over union of two axis-aligned rectangles; 0 when disjoint."""
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


def _bev_corners(box: Box3D) -> np.ndarray:
    """(4, 2) bird's-eye-view rectangle corners, counterclockwise."""
    l, w = box.scale[0] / 2.0, box.scale[1] / 2.0
    local = np.array([[+l, +w], [-l, +w], [-l, -w], [+l, -w]])
    return local @ rotation2d(box.yaw).T + np.asarray(box.position[:2], dtype=float)


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of a convex subject polygon against a convex,
    counterclockwise clip polygon."""
    output = [subject[i] for i in range(subject.shape[0])]
    m = clip.shape[0]
    for i in range(m):
        if not output:
            break
        p1 = clip[i]
        p2 = clip[(i + 1) % m]
        edge = p2 - p1
        prev = output[-1]
        prev_in = edge[0] * (prev[1] - p1[1]) - edge[1] * (prev[0] - p1[0]) >= 0.0
        result: list[np.ndarray] = []
        for cur in output:
            cur_in = edge[0] * (cur[1] - p1[1]) - edge[1] * (cur[0] - p1[0]) >= 0.0
            if cur_in != prev_in:
                # segment crosses the clip line; add the intersection point
                d = cur - prev
                denom = edge[0] * d[1] - edge[1] * d[0]
                t = (edge[0] * (p1[1] - prev[1]) - edge[1] * (p1[0] - prev[0])) / denom
                result.append(prev + t * d)
            if cur_in:
                result.append(cur)
            prev, prev_in = cur, cur_in
        output = result
    return output


def _polygon_area(vertices: list[np.ndarray]) -> float:
    if len(vertices) < 3:
        return 0.0
    arr = np.asarray(vertices)
    x, y = arr[:, 0], arr[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def iou3d(a: Box3D, b: Box3D) -> float:
    """Exact 3D IoU for yaw-only boxes.

    Bird's-eye-view intersection area comes from convex polygon clipping of
    the two rotated rectangles; the intersection volume is that area times
    the vertical overlap.
    """
    dz = min(a.z_top, b.z_top) - max(a.z_bottom, b.z_bottom)
    if dz <= 0.0:
        return 0.0
    inter_area = _polygon_area(_clip_polygon(_bev_corners(a), _bev_corners(b)))
    inter = inter_area * dz
    if inter <= 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return inter / union
