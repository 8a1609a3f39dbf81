"""HTTP backend for the review UI.

Serves frames from a KITTI-layout dataset root (velodyne/, calib/, image_2/,
detections/, gt_expert/ or label_2/), computes pre-annotation and fusion
lazily per frame, and persists annotation sessions as JSON files under a
sessions directory.  Writes are serialized per frame; cached bundles are
immutable, so reads are lock-free once computed.
"""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import (
    DegenerateFitError,
    FormatError,
    NotFoundError,
    UpstreamDataError,
    ValidationError,
)
from .evaluation import compute_metrics, match_to_ground_truth
from .fusion import FusionConfig, FusionReport, fuse_frame
from .geometry import Box3D, project_box3d_to_rect
from .kitti_io import (
    DEFAULT_IMAGE_SIZE,
    AnnotationSession,
    Calibration,
    DetectionSet,
    EVENT_KINDS,
    PointCloud,
    SessionBox,
    TimingEvent,
    load_calibration,
    load_detections,
    load_kitti_labels,
    load_point_cloud,
    load_session,
    save_session,
    session_to_dict,
)
from .preannotate import PreannotateConfig, fit_box, preannotate_frame, to_session

DEFAULT_PORT = 8787


@dataclass
class ServiceConfig:
    dataset_root: Path
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE
    projection_key: str = "P2"
    preannotate: PreannotateConfig = field(default_factory=PreannotateConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    min_iou3d: float = 0.25
    sessions_dir: Optional[Path] = None
    webui_dir: Optional[Path] = None

    def __post_init__(self):
        self.dataset_root = Path(self.dataset_root)
        if self.sessions_dir is None:
            self.sessions_dir = self.dataset_root / "sessions"
        self.sessions_dir = Path(self.sessions_dir)
        if self.webui_dir is not None:
            self.webui_dir = Path(self.webui_dir)


def load_service_config(path=None, env=None) -> ServiceConfig:
    """Build config from an optional JSON file plus environment overrides
    (PALF_DATASET_ROOT, PALF_PORT)."""
    env = os.environ if env is None else env
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: unreadable service config: {exc}") from None
        if not isinstance(doc, dict):
            raise FormatError(f"{path}: service config must be a JSON object")
    root = env.get("PALF_DATASET_ROOT") or doc.get("dataset_root")
    if not root:
        raise ValidationError(
            "no dataset root configured (set PALF_DATASET_ROOT or dataset_root in the config file)"
        )
    kwargs = dict(
        dataset_root=Path(root),
        host=doc.get("host", "127.0.0.1"),
        port=int(env.get("PALF_PORT") or doc.get("port", DEFAULT_PORT)),
        projection_key=doc.get("projection_key", "P2"),
        min_iou3d=float(doc.get("min_iou3d", 0.25)),
    )
    if "image_size" in doc:
        kwargs["image_size"] = tuple(int(v) for v in doc["image_size"])
    if "sessions_dir" in doc:
        kwargs["sessions_dir"] = Path(doc["sessions_dir"])
    if "webui_dir" in doc:
        kwargs["webui_dir"] = Path(doc["webui_dir"])
    if "preannotate" in doc:
        kwargs["preannotate"] = PreannotateConfig(**doc["preannotate"])
    if "fusion" in doc:
        kwargs["fusion"] = FusionConfig(**doc["fusion"])
    return ServiceConfig(**kwargs)


def _box_from_payload(entry: dict, where: str, diagnostics: list[str]) -> Optional[Box3D]:
    try:
        return Box3D(
            position=tuple(float(v) for v in entry["position"]),
            scale=tuple(float(v) for v in entry["scale"]),
            yaw=float(entry["yaw"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        diagnostics.append(f"{where}: {exc}")
        return None


class FrameStore:
    """Dataset access + per-frame annotation state for the service."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.root = Path(config.dataset_root)
        if not self.root.is_dir():
            raise ValidationError(f"dataset root {self.root} is not a directory")
        self._global_lock = threading.Lock()
        self._frame_locks: dict[str, threading.Lock] = {}
        self._clouds: dict[str, PointCloud] = {}
        self._calibs: dict[str, Calibration] = {}
        self._sessions: dict[str, AnnotationSession] = {}
        self._bundles: dict[str, dict] = {}

    # -- plumbing ----------------------------------------------------------

    def _lock(self, frame_id: str) -> threading.Lock:
        with self._global_lock:
            return self._frame_locks.setdefault(frame_id, threading.Lock())

    def frame_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "velodyne").glob("*.bin"))

    def _require_frame(self, frame_id: str) -> None:
        if not (self.root / "velodyne" / f"{frame_id}.bin").is_file():
            raise NotFoundError(f"unknown frame {frame_id!r}")

    def _session_path(self, frame_id: str) -> Path:
        return Path(self.config.sessions_dir) / f"{frame_id}.json"

    def cloud(self, frame_id: str) -> PointCloud:
        self._require_frame(frame_id)
        if frame_id not in self._clouds:
            try:
                self._clouds[frame_id] = load_point_cloud(
                    self.root / "velodyne" / f"{frame_id}.bin"
                )
            except (OSError, FormatError, ValueError) as exc:
                raise UpstreamDataError(f"frame {frame_id}: unreadable point cloud: {exc}") from None
        return self._clouds[frame_id]

    def calibration(self, frame_id: str) -> Calibration:
        self._require_frame(frame_id)
        if frame_id not in self._calibs:
            try:
                self._calibs[frame_id] = load_calibration(
                    self.root / "calib" / f"{frame_id}.txt",
                    image_size=self.config.image_size,
                    projection_key=self.config.projection_key,
                )
            except (OSError, FormatError, ValueError) as exc:
                raise UpstreamDataError(f"frame {frame_id}: unreadable calibration: {exc}") from None
        return self._calibs[frame_id]

    def detections(self, frame_id: str) -> Optional[DetectionSet]:
        path = self.root / "detections" / f"{frame_id}.json"
        if not path.is_file():
            return None
        try:
            return load_detections(path)
        except FormatError as exc:
            raise UpstreamDataError(f"frame {frame_id}: bad detections file: {exc}") from None

    def image_path(self, frame_id: str) -> Path:
        self._require_frame(frame_id)
        for ext in ("png", "jpg", "jpeg"):
            path = self.root / "image_2" / f"{frame_id}.{ext}"
            if path.is_file():
                return path
        raise NotFoundError(f"frame {frame_id} has no image")

    # -- sessions and bundles ----------------------------------------------

    def _load_or_build_session(self, frame_id: str) -> AnnotationSession:
        if frame_id in self._sessions:
            return self._sessions[frame_id]
        path = self._session_path(frame_id)
        if path.is_file():
            session = load_session(path)
        else:
            dets = self.detections(frame_id)
            if dets is None:
                session = AnnotationSession(frame_id=frame_id)
            else:
                pre = preannotate_frame(
                    self.cloud(frame_id), dets.boxes3d, self.config.preannotate
                )
                session = to_session(frame_id, pre)
        self._sessions[frame_id] = session
        return session

    def session(self, frame_id: str) -> AnnotationSession:
        self._require_frame(frame_id)
        with self._lock(frame_id):
            return self._load_or_build_session(frame_id)

    def _compute_bundle(self, frame_id: str) -> dict:
        cloud = self.cloud(frame_id)
        calib = self.calibration(frame_id)
        session = self._load_or_build_session(frame_id)
        dets = self.detections(frame_id)
        warnings_list: list[str] = []
        if dets is None:
            warnings_list.append(
                "no detections file for this frame; pre-annotation and fusion unavailable"
            )
            report = FusionReport()
        else:
            report = fuse_frame(cloud, calib, session.boxes, dets.boxes2d, self.config.fusion)
            if report.calibration_warning:
                warnings_list.append(report.calibration_warning)
        boxes = []
        for b in session.boxes:
            rect = project_box3d_to_rect(calib, b.box)
            boxes.append(
                {
                    "id": b.id,
                    "class": b.class_label,
                    "status": b.status,
                    "position": list(b.box.position),
                    "scale": list(b.box.scale),
                    "yaw": b.box.yaw,
                    "score": b.score,
                    "rect": rect.as_list() if rect is not None else None,
                }
            )
        return {
            "frame_id": frame_id,
            "point_count": len(cloud),
            "image_size": list(calib.image_size),
            "boxes": boxes,
            "fusion": report.to_dict(),
            "image_ref": f"/api/frames/{frame_id}/image",
            "warnings": warnings_list,
        }

    def bundle(self, frame_id: str) -> dict:
        self._require_frame(frame_id)
        cached = self._bundles.get(frame_id)
        if cached is not None:
            return cached
        with self._lock(frame_id):
            if frame_id not in self._bundles:
                self._bundles[frame_id] = self._compute_bundle(frame_id)
            return self._bundles[frame_id]

    # -- mutations -----------------------------------------------------------

    def put_annotations(self, frame_id: str, payload: dict) -> dict:
        self._require_frame(frame_id)
        if not isinstance(payload, dict) or not isinstance(payload.get("boxes"), list):
            raise ValidationError("payload must be an object with a boxes list")
        diagnostics: list[str] = []
        boxes: list[SessionBox] = []
        seen_ids: set[str] = set()
        for i, entry in enumerate(payload["boxes"]):
            where = f"boxes[{i}]"
            if not isinstance(entry, dict):
                diagnostics.append(f"{where}: expected an object")
                continue
            box = _box_from_payload(entry, where, diagnostics)
            if box is None:
                continue
            box_id = str(entry.get("id") or f"box_{i:04d}")
            if box_id in seen_ids:
                diagnostics.append(f"{where}: duplicate box id {box_id!r}")
                continue
            seen_ids.add(box_id)
            status = str(entry.get("status", "edited"))
            try:
                boxes.append(
                    SessionBox(
                        id=box_id,
                        box=box,
                        class_label=str(entry.get("class", "Car")),
                        status=status,
                        score=entry.get("score"),
                    )
                )
            except ValueError as exc:
                diagnostics.append(f"{where}: {exc}")
        if diagnostics:
            raise ValidationError("invalid annotation payload", diagnostics=diagnostics)
        with self._lock(frame_id):
            previous = self._load_or_build_session(frame_id)
            session = AnnotationSession(
                frame_id=frame_id, boxes=boxes, timing_events=list(previous.timing_events)
            )
            save_session(session, self._session_path(frame_id))
            self._sessions[frame_id] = session
            self._bundles.pop(frame_id, None)
            return session_to_dict(session)

    def refit(self, frame_id: str, payload: dict) -> dict:
        self._require_frame(frame_id)
        diagnostics: list[str] = []
        box = _box_from_payload(payload if isinstance(payload, dict) else {}, "box", diagnostics)
        if box is None:
            raise ValidationError("invalid refit payload", diagnostics=diagnostics)
        cloud = self.cloud(frame_id)
        try:
            fitted = fit_box(cloud, box, self.config.preannotate)
            degenerate = False
        except DegenerateFitError:
            fitted = box
            degenerate = True
        return {
            "box": {
                "position": list(fitted.position),
                "scale": list(fitted.scale),
                "yaw": fitted.yaw,
            },
            "degenerate": degenerate,
        }

    def record_event(self, frame_id: str, payload: dict) -> dict:
        self._require_frame(frame_id)
        if not isinstance(payload, dict):
            raise ValidationError("event payload must be an object")
        kind = payload.get("kind")
        if kind not in EVENT_KINDS:
            raise ValidationError(
                f"unknown event kind {kind!r}",
                diagnostics=[f"kind must be one of {sorted(EVENT_KINDS)}"],
            )
        try:
            event = TimingEvent(
                kind=str(kind),
                box_id=str(payload.get("box_id", "")),
                timestamp=float(payload["timestamp"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"invalid event payload: {exc}") from None
        with self._lock(frame_id):
            session = self._load_or_build_session(frame_id)
            prior = [ev.timestamp for ev in session.timing_events if ev.box_id == event.box_id]
            if prior and event.timestamp < prior[-1]:
                raise ValidationError(
                    f"timestamp {event.timestamp} is earlier than the last event "
                    f"for box {event.box_id!r}"
                )
            session.timing_events.append(event)
            save_session(session, self._session_path(frame_id))
            return {"ok": True, "event_count": len(session.timing_events)}

    # -- metrics -------------------------------------------------------------

    def ground_truth(self, frame_id: str, source: str):
        if source == "expert":
            path = self.root / "gt_expert" / f"{frame_id}.json"
            if not path.is_file():
                raise NotFoundError(f"frame {frame_id} has no expert ground truth")
            try:
                return load_detections(path).boxes3d
            except FormatError as exc:
                raise UpstreamDataError(f"frame {frame_id}: bad ground truth: {exc}") from None
        if source == "kitti":
            path = self.root / "label_2" / f"{frame_id}.txt"
            if not path.is_file():
                raise NotFoundError(f"frame {frame_id} has no label file")
            try:
                return load_kitti_labels(path, self.calibration(frame_id))
            except FormatError as exc:
                raise UpstreamDataError(f"frame {frame_id}: bad label file: {exc}") from None
        raise ValidationError(f"unknown ground-truth source {source!r} (use expert or kitti)")

    def metrics(self, frame_id: str, gt_source: str = "expert") -> dict:
        self._require_frame(frame_id)
        gt = self.ground_truth(frame_id, gt_source)
        session = self.session(frame_id)
        result = match_to_ground_truth(session.boxes, gt, min_iou3d=self.config.min_iou3d)
        report = compute_metrics({frame_id: result}, {frame_id: session})
        return report.to_dict()


def create_app(config: ServiceConfig):
    """Assemble the FastAPI application around a FrameStore."""
    from fastapi import Body, FastAPI, Query, Request
    from fastapi.responses import FileResponse, JSONResponse, Response

    store = FrameStore(config)
    app = FastAPI(title="palf", docs_url=None, redoc_url=None)
    app.state.store = store

    @app.exception_handler(NotFoundError)
    def _not_found(request: Request, exc: NotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc.args[0])})

    @app.exception_handler(ValidationError)
    def _invalid(request: Request, exc: ValidationError):
        return JSONResponse(
            status_code=400,
            content={"detail": str(exc.args[0]), "diagnostics": exc.diagnostics},
        )

    @app.exception_handler(UpstreamDataError)
    def _upstream(request: Request, exc: UpstreamDataError):
        return JSONResponse(status_code=500, content={"detail": str(exc.args[0])})

    @app.get("/api/frames")
    def list_frames():
        return {"frames": store.frame_ids()}

    @app.get("/api/frames/{frame_id}")
    def get_bundle(frame_id: str):
        return store.bundle(frame_id)

    @app.get("/api/frames/{frame_id}/points")
    def get_points(frame_id: str):
        cloud = store.cloud(frame_id)
        payload = cloud.points.astype("<f4").tobytes()
        return Response(content=payload, media_type="application/octet-stream")

    @app.get("/api/frames/{frame_id}/image")
    def get_image(frame_id: str):
        return FileResponse(store.image_path(frame_id))

    @app.put("/api/frames/{frame_id}/annotations")
    def put_annotations(frame_id: str, payload: dict = Body(...)):
        return store.put_annotations(frame_id, payload)

    @app.post("/api/frames/{frame_id}/refit")
    def refit(frame_id: str, payload: dict = Body(...)):
        return store.refit(frame_id, payload)

    @app.post("/api/frames/{frame_id}/events")
    def record_event(frame_id: str, payload: dict = Body(...)):
        return store.record_event(frame_id, payload)

    @app.get("/api/frames/{frame_id}/metrics")
    def metrics(frame_id: str, gt: str = Query("expert")):
        return store.metrics(frame_id, gt_source=gt)

    if config.webui_dir is not None and Path(config.webui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(config.webui_dir), html=True), name="webui")

    return app


def run(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
