"""On-disk formats: KITTI point clouds, calibration and labels, detection
interchange JSON, and annotation sessions.

All loaders are pure functions of file contents.  Session saves go through a
write-to-temp-then-rename step so a killed process never leaves a torn file.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataWarning, FormatError
from .geometry import Box2D, Box3D, normalize_yaw

DEFAULT_IMAGE_SIZE = (1242, 375)

SESSION_SCHEMA_VERSION = 1

BOX_STATUSES = frozenset({"pre_annotated", "confirmed", "edited", "created"})
EVENT_KINDS = frozenset(
    {"box_opened", "box_confirmed", "box_edited", "box_created", "box_deleted"}
)

_POINT_RECORD_BYTES = 16  # four little-endian float32: x, y, z, intensity


@dataclass
class PointCloud:
    """LiDAR points (N, 3) in meters plus optional per-point intensity in [0, 1]."""

    points: np.ndarray
    intensity: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if pts.size and not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        self.points = pts
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=float).reshape(-1)
            if inten.shape[0] != pts.shape[0]:
                raise ValueError(
                    f"intensity length {inten.shape[0]} != point count {pts.shape[0]}"
                )
            self.intensity = inten

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(eq=False)
class Calibration:
    """KITTI projection chain: LiDAR frame -> rectified camera -> image plane.

    cam_projection is the 3x4 camera matrix (pixels), rect_rotation the 3x3
    rectifying rotation, lidar_to_cam the 3x4 rigid transform (meters).
    """

    cam_projection: np.ndarray
    rect_rotation: np.ndarray
    lidar_to_cam: np.ndarray
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE

    def __post_init__(self):
        self.cam_projection = _require_matrix(self.cam_projection, (3, 4), "cam_projection")
        self.rect_rotation = _require_matrix(self.rect_rotation, (3, 3), "rect_rotation")
        self.lidar_to_cam = _require_matrix(self.lidar_to_cam, (3, 4), "lidar_to_cam")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError(f"image_size must be strictly positive, got {self.image_size!r}")
        self.image_size = (int(w), int(h))
        err = np.abs(self.rect_rotation @ self.rect_rotation.T - np.eye(3)).max()
        if err > 1e-3:
            raise ValueError(f"rect_rotation is not orthonormal (max deviation {err:.2e})")


def _require_matrix(value, shape, name) -> np.ndarray:
    mat = np.asarray(value, dtype=float)
    if mat.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {mat.shape}")
    if not np.isfinite(mat).all():
        raise ValueError(f"{name} must be finite")
    return mat


@dataclass(frozen=True)
class Detection3D:
    box: Box3D
    class_label: str
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score!r}")


@dataclass(frozen=True)
class Detection2D:
    box: Box2D
    class_label: str
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score!r}")


@dataclass
class DetectionSet:
    """Contents of one detection-interchange file."""

    frame_id: Optional[str] = None
    boxes3d: list[Detection3D] = field(default_factory=list)
    boxes2d: list[Detection2D] = field(default_factory=list)


@dataclass
class SessionBox:
    id: str
    box: Box3D
    class_label: str = "Car"
    status: str = "pre_annotated"
    score: Optional[float] = None

    def __post_init__(self):
        if self.status not in BOX_STATUSES:
            raise ValueError(f"unknown box status {self.status!r}")


@dataclass
class TimingEvent:
    kind: str
    box_id: str
    timestamp: float

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if not math.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")


@dataclass
class AnnotationSession:
    """Per-frame annotation state: current boxes plus the annotator timing log."""

    frame_id: str
    boxes: list[SessionBox] = field(default_factory=list)
    timing_events: list[TimingEvent] = field(default_factory=list)

    def validate(self) -> None:
        ids = [b.id for b in self.boxes]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate box ids: {dup}")
        last: dict[str, float] = {}
        for ev in self.timing_events:
            if ev.box_id in last and ev.timestamp < last[ev.box_id]:
                raise ValueError(
                    f"timing events for box {ev.box_id!r} are not monotonically non-decreasing"
                )
            last[ev.box_id] = ev.timestamp


# ---------------------------------------------------------------------------
# point clouds

def load_point_cloud(path) -> PointCloud:
    """Read a packed float32 (x, y, z, intensity) point dump.

    Rows with non-finite coordinates are dropped and reported through the
    warnings channel; real LiDAR dumps contain junk rows.
    """
    raw = Path(path).read_bytes()
    if len(raw) % _POINT_RECORD_BYTES != 0:
        raise FormatError(
            f"{path}: byte length {len(raw)} is not divisible by {_POINT_RECORD_BYTES}"
        )
    arr = np.frombuffer(raw, dtype="<f4").reshape(-1, 4).astype(float)
    finite = np.isfinite(arr).all(axis=1)
    dropped = int((~finite).sum())
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} non-finite points", DataWarning, stacklevel=2)
        arr = arr[finite]
    return PointCloud(points=arr[:, :3], intensity=np.clip(arr[:, 3], 0.0, 1.0))


def save_point_cloud(path, cloud: PointCloud) -> None:
    """Write a cloud back to the packed float32 quadruple format."""
    n = len(cloud)
    out = np.zeros((n, 4), dtype="<f4")
    out[:, :3] = cloud.points
    if cloud.intensity is not None:
        out[:, 3] = cloud.intensity
    Path(path).write_bytes(out.tobytes())


# ---------------------------------------------------------------------------
# calibration

_CALIB_ARITY = {"P2": 12, "R0_rect": 9, "Tr_velo_to_cam": 12}


def load_calibration(path, image_size=DEFAULT_IMAGE_SIZE, projection_key="P2") -> Calibration:
    """Parse a KITTI-style calib file: ``KEY: v1 v2 ...`` lines, row-major.

    image_size is not stored in these files, so the caller supplies it.
    projection_key selects the camera (P2, the left color camera, by default).
    """
    values: dict[str, list[float]] = {}
    for line in Path(path).read_text().splitlines():
        if ":" not in line:
            continue
        key, rest = line.split(":", 1)
        key = key.strip()
        try:
            values[key] = [float(tok) for tok in rest.split()]
        except ValueError as exc:
            raise FormatError(f"{path}: bad number in {key!r} line: {exc}") from None
    needed = {projection_key: 12, "R0_rect": 9, "Tr_velo_to_cam": 12}
    for key, arity in needed.items():
        if key not in values:
            raise FormatError(f"{path}: missing calibration key {key!r}")
        if len(values[key]) != arity:
            raise FormatError(
                f"{path}: key {key!r} has {len(values[key])} values, expected {arity}"
            )
    try:
        return Calibration(
            cam_projection=np.array(values[projection_key]).reshape(3, 4),
            rect_rotation=np.array(values["R0_rect"]).reshape(3, 3),
            lidar_to_cam=np.array(values["Tr_velo_to_cam"]).reshape(3, 4),
            image_size=image_size,
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# detections

def _json_number(obj, pointer):
    if not isinstance(obj, (int, float)) or isinstance(obj, bool) or not math.isfinite(obj):
        raise FormatError(f"{pointer}: expected a finite number, got {obj!r}")
    return float(obj)


def _json_vector(obj, length, pointer):
    if not isinstance(obj, list) or len(obj) != length:
        raise FormatError(f"{pointer}: expected a list of {length} numbers")
    return [_json_number(v, f"{pointer}/{i}") for i, v in enumerate(obj)]


def _clamped_score(entry, pointer, path):
    score = _json_number(entry.get("score"), f"{pointer}/score")
    if not (0.0 <= score <= 1.0):
        clamped = min(max(score, 0.0), 1.0)
        warnings.warn(
            f"{path}: score {score} at {pointer} clamped to {clamped}",
            DataWarning,
            stacklevel=3,
        )
        return clamped
    return score


def load_detections(path) -> DetectionSet:
    """Read a detection-interchange JSON file.

    Schema: {"frame_id": str, "boxes3d": [{"position", "scale", "yaw",
    "class", "score"}], "boxes2d": [{"rect", "class", "score"}]}; either list
    may be absent.  Order is preserved; out-of-range scores are clamped to
    [0, 1] with a warning.  Unknown keys are ignored.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    out = DetectionSet(frame_id=doc.get("frame_id"))
    for i, entry in enumerate(doc.get("boxes3d") or []):
        pointer = f"/boxes3d/{i}"
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: {pointer}: expected an object")
        try:
            box = Box3D(
                position=tuple(_json_vector(entry.get("position"), 3, f"{pointer}/position")),
                scale=tuple(_json_vector(entry.get("scale"), 3, f"{pointer}/scale")),
                yaw=_json_number(entry.get("yaw"), f"{pointer}/yaw"),
            )
        except ValueError as exc:
            raise FormatError(f"{path}: {pointer}: {exc}") from None
        out.boxes3d.append(
            Detection3D(
                box=box,
                class_label=str(entry.get("class", "Car")),
                score=_clamped_score(entry, pointer, path),
            )
        )
    for i, entry in enumerate(doc.get("boxes2d") or []):
        pointer = f"/boxes2d/{i}"
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: {pointer}: expected an object")
        rect = _json_vector(entry.get("rect"), 4, f"{pointer}/rect")
        try:
            box = Box2D(*rect)
        except ValueError as exc:
            raise FormatError(f"{path}: {pointer}: {exc}") from None
        out.boxes2d.append(
            Detection2D(
                box=box,
                class_label=str(entry.get("class", "Car")),
                score=_clamped_score(entry, pointer, path),
            )
        )
    return out


def save_detections(path, dets: DetectionSet, extra_box3d_fields: Optional[Sequence[dict]] = None) -> None:
    """Write a DetectionSet in the interchange schema.

    extra_box3d_fields, when given, is merged entry-by-entry into the boxes3d
    records (used to carry pre-annotation status alongside the geometry).
    """
    doc: dict = {}
    if dets.frame_id is not None:
        doc["frame_id"] = dets.frame_id
    boxes3d = []
    for i, det in enumerate(dets.boxes3d):
        entry = {
            "position": list(det.box.position),
            "scale": list(det.box.scale),
            "yaw": det.box.yaw,
            "class": det.class_label,
            "score": det.score,
        }
        if extra_box3d_fields is not None:
            entry.update(extra_box3d_fields[i])
        boxes3d.append(entry)
    doc["boxes3d"] = boxes3d
    doc["boxes2d"] = [
        {"rect": det.box.as_list(), "class": det.class_label, "score": det.score}
        for det in dets.boxes2d
    ]
    _atomic_write_text(path, json.dumps(doc, indent=1))


# ---------------------------------------------------------------------------
# KITTI labels (camera-frame ground truth)

def lidar_box_from_camera_label(location, dimensions_hwl, rotation_y, calib: Calibration) -> Box3D:
    """Convert a camera-frame label (bottom-center location, (h, w, l) dims,
    rotation about the camera y axis) to a LiDAR-frame box.

    Both the center and the heading direction go through the inverse
    calibration chain, so the result is exact for any calibration.
    """
    h, w, l = (float(v) for v in dimensions_hwl)
    loc = np.asarray(location, dtype=float)
    center_rect = loc + np.array([0.0, -h / 2.0, 0.0])  # camera y points down
    rot = calib.lidar_to_cam[:, :3]
    trans = calib.lidar_to_cam[:, 3]
    rect_inv = calib.rect_rotation.T
    center_velo = rot.T @ (rect_inv @ center_rect - trans)
    heading_rect = np.array([math.cos(rotation_y), 0.0, -math.sin(rotation_y)])
    heading_velo = rot.T @ (rect_inv @ heading_rect)
    yaw = math.atan2(heading_velo[1], heading_velo[0])
    return Box3D(position=tuple(center_velo), scale=(l, w, h), yaw=normalize_yaw(yaw))


def load_kitti_labels(path, calib: Calibration) -> list[Detection3D]:
    """Read a KITTI label file as LiDAR-frame detections (score 1.0).

    DontCare rows are skipped.  Label rows carry camera-frame boxes, so the
    calibration is required to move them into the LiDAR frame.
    """
    out: list[Detection3D] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "DontCare":
            continue
        if len(parts) < 15:
            raise FormatError(f"{path}:{lineno}: expected at least 15 fields, got {len(parts)}")
        try:
            vals = [float(tok) for tok in parts[1:15]]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        dims_hwl = vals[7:10]
        location = vals[10:13]
        rotation_y = vals[13]
        box = lidar_box_from_camera_label(location, dims_hwl, rotation_y, calib)
        out.append(Detection3D(box=box, class_label=parts[0], score=1.0))
    return out


# ---------------------------------------------------------------------------
# annotation sessions

def _session_box_to_dict(b: SessionBox) -> dict:
    entry = {
        "id": b.id,
        "class": b.class_label,
        "status": b.status,
        "position": list(b.box.position),
        "scale": list(b.box.scale),
        "yaw": b.box.yaw,
    }
    if b.score is not None:
        entry["score"] = b.score
    return entry


def session_to_dict(session: AnnotationSession) -> dict:
    return {
        "palf_session": SESSION_SCHEMA_VERSION,
        "frame_id": session.frame_id,
        "boxes": [_session_box_to_dict(b) for b in session.boxes],
        "timing_events": [
            {"kind": ev.kind, "box_id": ev.box_id, "timestamp": ev.timestamp}
            for ev in session.timing_events
        ],
    }


def session_from_dict(doc: dict, source="session") -> AnnotationSession:
    if not isinstance(doc, dict) or doc.get("palf_session") != SESSION_SCHEMA_VERSION:
        raise FormatError(f"{source}: not a version-{SESSION_SCHEMA_VERSION} session document")
    try:
        boxes = [
            SessionBox(
                id=str(entry["id"]),
                box=Box3D(
                    position=tuple(entry["position"]),
                    scale=tuple(entry["scale"]),
                    yaw=entry["yaw"],
                ),
                class_label=str(entry.get("class", "Car")),
                status=str(entry.get("status", "pre_annotated")),
                score=entry.get("score"),
            )
            for entry in doc.get("boxes", [])
        ]
        events = [
            TimingEvent(
                kind=str(entry["kind"]),
                box_id=str(entry["box_id"]),
                timestamp=float(entry["timestamp"]),
            )
            for entry in doc.get("timing_events", [])
        ]
        session = AnnotationSession(
            frame_id=str(doc.get("frame_id", "")), boxes=boxes, timing_events=events
        )
        session.validate()
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{source}: {exc}") from None
    return session


def save_session(session: AnnotationSession, path) -> None:
    """Atomically persist a session (validated first)."""
    try:
        session.validate()
    except ValueError as exc:
        raise ValueError(f"refusing to save invalid session: {exc}") from None
    _atomic_write_text(path, json.dumps(session_to_dict(session), indent=1))


def load_session(path) -> AnnotationSession:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None
    return session_from_dict(doc, source=str(path))


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
