"""Batch command line: pre-annotate, fuse, evaluate, serve.

Operates over KITTI-layout dataset roots (velodyne/, calib/, detections/).
Exit codes: 0 success, 1 validation or usage error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .errors import FormatError, NotFoundError, UpstreamDataError, ValidationError
from .evaluation import (
    DEFAULT_MIN_IOU3D,
    compute_metrics,
    format_table,
    match_to_ground_truth,
)
from .fusion import FusionConfig, fuse_frame
from .kitti_io import (
    Detection3D,
    DetectionSet,
    load_calibration,
    load_detections,
    load_point_cloud,
    load_session,
    save_detections,
)
from .preannotate import PreannotateConfig, preannotate_frame

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class SystemExit1(Exception):
    """Usage problem that must surface as exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; the documented mapping
    # reserves 2 for I/O, so usage problems must come back as 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit1(f"{self.prog}: error: {message}")


def _add_preannotate_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--point-threshold", type=int, default=None)
    p.add_argument("--crop-margin", type=float, default=None, metavar="M")
    p.add_argument("--yaw-halfwidth", type=float, default=None, metavar="RAD")
    p.add_argument("--yaw-step", type=float, default=None, metavar="RAD")
    p.add_argument("--ground-band", type=float, default=None, metavar="M")
    p.add_argument("--min-score", type=float, default=None)


def _preannotate_config(args) -> PreannotateConfig:
    overrides = {
        "point_threshold": args.point_threshold,
        "crop_margin_m": args.crop_margin,
        "yaw_search_halfwidth_rad": args.yaw_halfwidth,
        "yaw_step_rad": args.yaw_step,
        "ground_band_m": args.ground_band,
        "min_score": args.min_score,
    }
    return PreannotateConfig(**{k: v for k, v in overrides.items() if v is not None})


def _fusion_config(args) -> FusionConfig:
    overrides = {
        "iou2d_threshold": args.iou2d_threshold,
        "max_center_distance_px": args.max_center_distance,
        "min_2d_score": args.min_2d_score,
    }
    return FusionConfig(**{k: v for k, v in overrides.items() if v is not None})


def build_parser() -> _Parser:
    parser = _Parser(prog="palf", description="Point-cloud annotation assistance pipeline.")
    sub = parser.add_subparsers(dest="subcommand", metavar="{preannotate,fuse,evaluate,serve}")
    sub.required = True

    pre = sub.add_parser("preannotate", help="refine 3D detections into pre-annotation boxes")
    pre.add_argument("--root", required=True, help="dataset root (KITTI layout)")
    pre.add_argument("--frames", default="all", help="comma list and/or start..end ranges")
    pre.add_argument("--out", required=True, help="output directory for per-frame JSON")
    pre.add_argument("--workers", type=int, default=1)
    pre.add_argument("--json", action="store_true", help="machine-readable stdout")
    _add_preannotate_flags(pre)

    fuse = sub.add_parser("fuse", help="cross-check 3D boxes against 2D detections")
    fuse.add_argument("--root", required=True)
    fuse.add_argument("--frames", default="all")
    fuse.add_argument("--out", required=True)
    fuse.add_argument("--pre", default=None, help="read pre-annotations from this directory "
                      "(defaults to computing them in-process)")
    fuse.add_argument("--iou2d-threshold", type=float, default=None)
    fuse.add_argument("--min-2d-score", type=float, default=None)
    fuse.add_argument("--max-center-distance", type=float, default=None, metavar="PX")
    fuse.add_argument("--no-missed-check", action="store_true",
                      help="drop missed-object output (wrong-box check only)")
    fuse.add_argument("--disabled", action="store_true",
                      help="write empty reports (no cross-checking)")
    fuse.add_argument("--workers", type=int, default=1)
    fuse.add_argument("--json", action="store_true")
    _add_preannotate_flags(fuse)

    ev = sub.add_parser("evaluate", help="score candidate boxes against ground truth")
    ev.add_argument("--pred", required=True, help="candidate JSON file or directory "
                    "(detection or session documents)")
    ev.add_argument("--gt", required=True, help="ground-truth JSON file or directory")
    ev.add_argument("--min-iou3d", type=float, default=DEFAULT_MIN_IOU3D)
    ev.add_argument("--out", default=None, metavar="BASE",
                    help="write BASE.json and BASE.txt instead of stdout only")
    ev.add_argument("--json", action="store_true")

    srv = sub.add_parser("serve", help="run the HTTP review service")
    srv.add_argument("--root", default=None, help="dataset root (or PALF_DATASET_ROOT)")
    srv.add_argument("--config", default=None, help="JSON config file")
    srv.add_argument("--host", default=None)
    srv.add_argument("--port", type=int, default=None)
    srv.add_argument("--webui", default=None, help="directory of built UI assets to serve")
    return parser


# ---------------------------------------------------------------------------
# frame selection


def _select_frames(root: Path, spec: str) -> list[str]:
    available = sorted(p.stem for p in (root / "velodyne").glob("*.bin"))
    if not available:
        raise FileNotFoundError(f"no frames under {root / 'velodyne'}")
    if spec == "all":
        return available
    chosen: list[str] = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if ".." in token:
            start, _, end = token.partition("..")
            picked = [f for f in available if start <= f <= end]
            if not picked:
                raise ValidationError(f"range {token!r} matches no frames")
            chosen.extend(picked)
        elif token in available:
            chosen.append(token)
        else:
            raise ValidationError(f"unknown frame {token!r}")
    seen = set()
    ordered = [f for f in chosen if not (f in seen or seen.add(f))]
    return ordered


def _map_frames(frames: list[str], fn, workers: int) -> list:
    if workers <= 1:
        return [fn(f) for f in frames]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, frames))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_preannotate(args) -> int:
    root = Path(args.root)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _preannotate_config(args)
    frames = _select_frames(root, args.frames)

    def one(frame_id: str) -> dict:
        cloud = load_point_cloud(root / "velodyne" / f"{frame_id}.bin")
        dets = load_detections(root / "detections" / f"{frame_id}.json")
        pre = preannotate_frame(cloud, dets.boxes3d, cfg)
        out = DetectionSet(
            frame_id=frame_id,
            boxes3d=[_pre_as_detection(b) for b in pre],
            boxes2d=list(dets.boxes2d),
        )
        path = out_dir / f"{frame_id}.json"
        save_detections(
            path, out,
            extra_box3d_fields=[{"status": b.status, "refit": b.refit} for b in pre],
        )
        return {"frame_id": frame_id, "boxes": len(pre), "path": str(path)}

    results = _map_frames(frames, one, args.workers)
    if args.json:
        print(json.dumps({"preannotated": results}, indent=1))
    else:
        for r in results:
            print(f"{r['frame_id']}: {r['boxes']} boxes -> {r['path']}")
    return EXIT_OK


def _pre_as_detection(pre_box) -> Detection3D:
    return Detection3D(box=pre_box.box, class_label=pre_box.class_label, score=pre_box.score)


def _cmd_fuse(args) -> int:
    root = Path(args.root)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pre_cfg = _preannotate_config(args)
    fuse_cfg = _fusion_config(args)
    frames = _select_frames(root, args.frames)

    def one(frame_id: str) -> dict:
        cloud = load_point_cloud(root / "velodyne" / f"{frame_id}.bin")
        calib = load_calibration(root / "calib" / f"{frame_id}.txt")
        dets = load_detections(root / "detections" / f"{frame_id}.json")
        if args.pre is not None:
            boxes3d = load_detections(Path(args.pre) / f"{frame_id}.json").boxes3d
        else:
            boxes3d = preannotate_frame(cloud, dets.boxes3d, pre_cfg)
        report = fuse_frame(cloud, calib, boxes3d, dets.boxes2d, fuse_cfg)
        doc = report.to_dict()
        if args.disabled:
            for key in ("confirmed", "wrong", "missed", "out_of_view", "class_mismatches",
                        "highlighted_wrong_points", "highlighted_missed_points",
                        "missed_image_regions"):
                doc[key] = []
        elif args.no_missed_check:
            for key in ("missed", "highlighted_missed_points", "missed_image_regions"):
                doc[key] = []
        doc = {"frame_id": frame_id, **doc}
        path = out_dir / f"{frame_id}.json"
        path.write_text(json.dumps(doc, indent=1))
        return {
            "frame_id": frame_id,
            "confirmed": len(doc["confirmed"]),
            "wrong": len(doc["wrong"]),
            "missed": len(doc["missed"]),
            "out_of_view": len(doc["out_of_view"]),
            "path": str(path),
        }

    results = _map_frames(frames, one, args.workers)
    if args.json:
        print(json.dumps({"fused": results}, indent=1))
    else:
        for r in results:
            print(
                f"{r['frame_id']}: {r['confirmed']} confirmed, {r['wrong']} wrong, "
                f"{r['missed']} missed, {r['out_of_view']} out of view -> {r['path']}"
            )
    return EXIT_OK


def _load_boxes_for_eval(path: Path):
    """A prediction/gt document: detection JSON, session JSON, or a directory
    of either.  Returns ({frame_key: boxes}, {frame_key: session or None})."""
    if path.is_dir():
        boxes, sessions = {}, {}
        for child in sorted(path.glob("*.json")):
            b, s = _load_one_eval_file(child)
            boxes[child.stem] = b
            sessions[child.stem] = s
        if not boxes:
            raise FileNotFoundError(f"no JSON files under {path}")
        return boxes, sessions
    b, s = _load_one_eval_file(path)
    return {path.stem: b}, {path.stem: s}


def _load_one_eval_file(path: Path):
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None
    if isinstance(doc, dict) and "palf_session" in doc:
        session = load_session(path)
        return [b.box for b in session.boxes], session
    dets = load_detections(path)
    return [d.box for d in dets.boxes3d], None


def _cmd_evaluate(args) -> int:
    pred_boxes, pred_sessions = _load_boxes_for_eval(Path(args.pred))
    gt_boxes, _ = _load_boxes_for_eval(Path(args.gt))
    if set(pred_boxes) != set(gt_boxes):
        if len(pred_boxes) == 1 and len(gt_boxes) == 1:
            # single-file comparison: stems don't need to agree
            key = next(iter(gt_boxes))
            pred_boxes = {key: next(iter(pred_boxes.values()))}
            pred_sessions = {key: next(iter(pred_sessions.values()))}
        else:
            missing = sorted(set(pred_boxes).symmetric_difference(gt_boxes))
            raise ValidationError(f"pred/gt frame sets differ: {missing}")
    matches = {
        key: match_to_ground_truth(pred_boxes[key], gt_boxes[key], min_iou3d=args.min_iou3d)
        for key in sorted(gt_boxes)
    }
    timing = {key: s for key, s in pred_sessions.items() if s is not None}
    report = compute_metrics(matches, timing or None)
    table = format_table(report)
    if args.out is not None:
        base = Path(args.out)
        base.parent.mkdir(parents=True, exist_ok=True)
        base.with_suffix(".json").write_text(json.dumps(report.to_dict(), indent=1))
        base.with_suffix(".txt").write_text(table + "\n")
    if args.json:
        print(json.dumps(report.to_dict(), indent=1))
    else:
        print(table)
    return EXIT_OK


def _cmd_serve(args) -> int:
    import os

    from .service import load_service_config, run as run_service

    if args.root is not None:
        os.environ["PALF_DATASET_ROOT"] = str(args.root)
    config = load_service_config(args.config)
    if args.host is not None:
        config.host = args.host
    if args.port is not None:
        config.port = args.port
    if args.webui is not None:
        config.webui_dir = Path(args.webui)
    print(f"serving {config.dataset_root} on http://{config.host}:{config.port}", file=sys.stderr)
    run_service(config)
    return EXIT_OK


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "preannotate": _cmd_preannotate,
        "fuse": _cmd_fuse,
        "evaluate": _cmd_evaluate,
        "serve": _cmd_serve,
    }
    return handlers[args.subcommand](args)


def entry(argv=None) -> int:
    """Console entry point with the documented exit-code mapping."""
    try:
        return run(argv)
    except SystemExit1 as exc:
        print(exc.args[0], file=sys.stderr)
        return EXIT_VALIDATION
    # FormatError and NotFoundError subclass ValueError/KeyError, so the I/O
    # clause must come first to keep the documented code mapping
    except (FormatError, NotFoundError, UpstreamDataError, OSError) as exc:
        print(f"palf: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"palf: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(entry())
