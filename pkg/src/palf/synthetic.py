"""Synthetic KITTI-style scenes with known ground truth.

Everything downstream (fitting, fusion, evaluation, the service, the CLI)
can be exercised against scenes generated here, where the true boxes are
known exactly: cuboid surfaces sampled point by point, a flat ground plane,
a pinhole camera looking down the LiDAR x axis, and detector output derived
from the truth with controllable noise (jitter, dropped boxes, sparse
objects below the fitting gate).

Run as a module to write a dataset tree:

    python -m palf.synthetic --out DIR --frames 8 --seed 7
"""
from __future__ import annotations

import argparse
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Box2D, Box3D, project_box3d_to_rect, project_points
from .kitti_io import (
    Calibration,
    DetectionSet,
    Detection2D,
    Detection3D,
    PointCloud,
    save_detections,
    save_point_cloud,
)

DEFAULT_IMAGE_SIZE = (1242, 375)
DEFAULT_GROUND_Z = -1.73  # sensor height above road, KITTI-like


def default_calibration(image_size=DEFAULT_IMAGE_SIZE, focal: float = 700.0) -> Calibration:
    """Pinhole camera on the LiDAR origin looking along +x.

    Camera axes: x right (-y LiDAR), y down (-z LiDAR), z forward (+x LiDAR).
    """
    w, h = image_size
    cam_projection = np.array(
        [
            [focal, 0.0, w / 2.0, 0.0],
            [0.0, focal, h / 2.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )
    lidar_to_cam = np.array(
        [
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ]
    )
    return Calibration(
        cam_projection=cam_projection,
        rect_rotation=np.eye(3),
        lidar_to_cam=lidar_to_cam,
        image_size=image_size,
    )


def sample_cuboid_surface(box: Box3D, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points uniform over the box surface (area-weighted across faces)."""
    l, w, h = box.scale
    areas = np.array([w * h, w * h, l * h, l * h, l * w, l * w])
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    a = rng.uniform(-0.5, 0.5, size=n)
    b = rng.uniform(-0.5, 0.5, size=n)
    pts = np.empty((n, 3))
    # fixed coordinate per face: +-x, +-y, +-z
    for face, (axis, sign) in enumerate(
        [(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)]
    ):
        mask = faces == face
        free = [i for i in range(3) if i != axis]
        pts[mask, axis] = sign * 0.5
        pts[mask, free[0]] = a[mask]
        pts[mask, free[1]] = b[mask]
    pts *= np.array([l, w, h])
    cos, sin = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[cos, -sin, 0.0], [sin, cos, 0.0], [0.0, 0.0, 1.0]])
    return pts @ rot.T + np.asarray(box.position)


def ground_plane_points(
    n: int,
    rng: np.random.Generator,
    x_range=(2.0, 45.0),
    y_halfwidth: float = 18.0,
    z: float = DEFAULT_GROUND_Z,
) -> np.ndarray:
    pts = np.empty((n, 3))
    pts[:, 0] = rng.uniform(*x_range, size=n)
    pts[:, 1] = rng.uniform(-y_halfwidth, y_halfwidth, size=n)
    pts[:, 2] = z
    return pts


def random_vehicle_box(
    rng: np.random.Generator,
    x_range=(8.0, 35.0),
    ground_z: float = DEFAULT_GROUND_Z,
) -> Box3D:
    """A car-sized box resting on the ground, inside the camera's view cone."""
    l = rng.uniform(3.0, 5.0)
    w = rng.uniform(1.5, 2.2)
    h = rng.uniform(1.3, 2.0)
    x = rng.uniform(*x_range)
    y = rng.uniform(-0.3 * x, 0.3 * x)
    yaw = rng.uniform(-math.pi, math.pi)
    return Box3D(position=(x, y, ground_z + h / 2.0), scale=(l, w, h), yaw=yaw)


def _spaced_vehicle_boxes(rng: np.random.Generator, n: int, min_spacing: float = 6.0) -> list[Box3D]:
    boxes: list[Box3D] = []
    attempts = 0
    while len(boxes) < n and attempts < 200 * n:
        attempts += 1
        cand = random_vehicle_box(rng)
        if all(
            math.dist(cand.position[:2], b.position[:2]) >= min_spacing for b in boxes
        ):
            boxes.append(cand)
    return boxes


@dataclass
class SyntheticFrame:
    """One generated frame: the truth plus detector output derived from it.

    object_roles mirrors gt order: dense (normal), sparse (too few points to
    pass the fitting gate), dropped (absent from the 3D detections).
    """

    frame_id: str
    cloud: PointCloud
    calib: Calibration
    gt: list[Detection3D]
    detections: DetectionSet
    object_roles: list[str] = field(default_factory=list)


def _jittered(box: Box3D, rng: np.random.Generator, pos_m: float, yaw_rad: float) -> Box3D:
    angle = rng.uniform(0.0, 2.0 * math.pi)
    radius = rng.uniform(0.0, pos_m)
    dx, dy = radius * math.cos(angle), radius * math.sin(angle)
    return Box3D(
        position=(box.position[0] + dx, box.position[1] + dy, box.position[2]),
        scale=box.scale,
        yaw=box.yaw + rng.uniform(-yaw_rad, yaw_rad),
    )


def make_frame(
    rng: np.random.Generator,
    frame_id: str = "000000",
    n_objects: int = 5,
    sparse_count: int = 1,
    dropped_count: int = 1,
    points_per_object=(200, 2000),
    sparse_points=(8, 15),
    ground_points: int = 4000,
    jitter_pos_m: float = 0.25,
    jitter_yaw_rad: float = math.radians(8.0),
    calib: Optional[Calibration] = None,
) -> SyntheticFrame:
    """Generate a frame with dense, sparse, and detector-dropped objects.

    Sparse objects carry too few points for the fitting gate, so their
    (jittered) detector boxes pass through pre-annotation unchanged; dropped
    objects appear only in the 2D detections.  Every object gets a 2D
    detection from its true projected rectangle.
    """
    calib = calib or default_calibration()
    gt_boxes = _spaced_vehicle_boxes(rng, n_objects)
    n_objects = len(gt_boxes)
    sparse_count = min(sparse_count, n_objects)
    dropped_count = min(dropped_count, max(0, n_objects - sparse_count))
    roles = ["dense"] * n_objects
    special = rng.permutation(n_objects)
    for i in special[:sparse_count]:
        roles[i] = "sparse"
    for i in special[sparse_count : sparse_count + dropped_count]:
        roles[i] = "dropped"

    chunks = [ground_plane_points(ground_points, rng)] if ground_points else []
    for box, role in zip(gt_boxes, roles):
        count = (
            int(rng.integers(*sparse_points))
            if role == "sparse"
            else int(rng.integers(*points_per_object))
        )
        chunks.append(sample_cuboid_surface(box, count, rng))
    pts = np.vstack(chunks) if chunks else np.zeros((0, 3))
    order = rng.permutation(pts.shape[0])
    cloud = PointCloud(points=pts[order], intensity=rng.uniform(0.0, 1.0, pts.shape[0]))

    gt = [Detection3D(box=b, class_label="Car", score=1.0) for b in gt_boxes]
    det = DetectionSet(frame_id=frame_id)
    for box, role in zip(gt_boxes, roles):
        if role == "dropped":
            continue
        det.boxes3d.append(
            Detection3D(
                box=_jittered(box, rng, jitter_pos_m, jitter_yaw_rad),
                class_label="Car",
                score=float(rng.uniform(0.5, 0.95)),
            )
        )
    for box in gt_boxes:
        rect = project_box3d_to_rect(calib, box)
        if rect is not None:
            det.boxes2d.append(
                Detection2D(box=rect, class_label="Car", score=float(rng.uniform(0.6, 0.98)))
            )
    return SyntheticFrame(
        frame_id=frame_id,
        cloud=cloud,
        calib=calib,
        gt=gt,
        detections=det,
        object_roles=roles,
    )


# ---------------------------------------------------------------------------
# on-disk dataset


def _calib_line(key: str, mat: np.ndarray) -> str:
    return key + ": " + " ".join(repr(float(v)) for v in np.asarray(mat).ravel())


def write_calibration(path, calib: Calibration) -> None:
    lines = [
        _calib_line("P2", calib.cam_projection),
        _calib_line("R0_rect", calib.rect_rotation),
        _calib_line("Tr_velo_to_cam", calib.lidar_to_cam),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def write_kitti_labels(path, boxes: list[Detection3D], calib: Calibration) -> None:
    """Write ground truth in the camera-frame label format."""
    rot = calib.lidar_to_cam[:, :3]
    trans = calib.lidar_to_cam[:, 3]
    lines = []
    for det in boxes:
        box = det.box
        l, w, h = box.scale
        center_rect = calib.rect_rotation @ (rot @ np.asarray(box.position) + trans)
        location = center_rect + np.array([0.0, h / 2.0, 0.0])  # bottom center, camera y down
        heading = calib.rect_rotation @ (rot @ np.array([math.cos(box.yaw), math.sin(box.yaw), 0.0]))
        ry = math.atan2(-heading[2], heading[0])
        rect = project_box3d_to_rect(calib, box)
        bbox = rect.as_list() if rect is not None else [0.0, 0.0, 0.0, 0.0]
        fields = [
            det.class_label,
            "0.00",
            "0",
            f"{ry:.6f}",
            *(f"{v:.2f}" for v in bbox),
            f"{h:.6f}",
            f"{w:.6f}",
            f"{l:.6f}",
            *(f"{v:.6f}" for v in location),
            f"{ry:.6f}",
        ]
        lines.append(" ".join(fields))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def render_image(frame: SyntheticFrame):
    """Camera image stand-in: projected points splatted over a dark ground."""
    from PIL import Image, ImageDraw

    w, h = frame.calib.image_size
    img = Image.new("RGB", (w, h), (24, 26, 30))
    draw = ImageDraw.Draw(img)
    proj = project_points(frame.calib, frame.cloud)
    for u, v in zip(proj.u[proj.valid], proj.v[proj.valid]):
        img.putpixel((int(u), int(v)), (90, 110, 130))
    for det in frame.gt:
        rect = project_box3d_to_rect(frame.calib, det.box)
        if rect is not None:
            draw.rectangle([rect.xmin, rect.ymin, rect.xmax, rect.ymax], outline=(160, 160, 90))
    return img


def write_dataset(root, frames: list[SyntheticFrame], images: bool = True) -> None:
    root = Path(root)
    for sub in ("velodyne", "calib", "image_2", "detections", "gt_expert", "label_2"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for frame in frames:
        save_point_cloud(root / "velodyne" / f"{frame.frame_id}.bin", frame.cloud)
        write_calibration(root / "calib" / f"{frame.frame_id}.txt", frame.calib)
        save_detections(root / "detections" / f"{frame.frame_id}.json", frame.detections)
        gt_set = DetectionSet(frame_id=frame.frame_id, boxes3d=list(frame.gt))
        save_detections(root / "gt_expert" / f"{frame.frame_id}.json", gt_set)
        write_kitti_labels(root / "label_2" / f"{frame.frame_id}.txt", frame.gt, frame.calib)
        if images:
            render_image(frame).save(root / "image_2" / f"{frame.frame_id}.png")


def generate_dataset(root, n_frames: int = 8, seed: int = 7, images: bool = True, **frame_kwargs) -> list[SyntheticFrame]:
    rng = np.random.default_rng(seed)
    frames = [
        make_frame(rng, frame_id=f"{i:06d}", **frame_kwargs) for i in range(n_frames)
    ]
    write_dataset(root, frames, images=images)
    return frames


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m palf.synthetic",
        description="Generate a synthetic KITTI-style dataset with known ground truth.",
    )
    parser.add_argument("--out", required=True, help="output dataset root")
    parser.add_argument("--frames", type=int, default=8)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--objects", type=int, default=5, help="objects per frame")
    parser.add_argument("--no-images", action="store_true", help="skip PNG rendering")
    args = parser.parse_args(argv)
    frames = generate_dataset(
        args.out,
        n_frames=args.frames,
        seed=args.seed,
        images=not args.no_images,
        n_objects=args.objects,
    )
    total = sum(len(f.cloud) for f in frames)
    print(f"wrote {len(frames)} frames ({total} points) under {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
