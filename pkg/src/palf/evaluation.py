"""Annotation-quality scoring: match candidate boxes to ground truth and
report 3D IoU, precision, recall, miss rate, and annotator timing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .assignment import CostMatrix, solve_assignment
from .geometry import Box3D, iou3d
from .kitti_io import AnnotationSession

METRICS_SCHEMA_VERSION = 1

DEFAULT_MIN_IOU3D = 0.25


def _as_box3d(item) -> Box3D:
    return item if isinstance(item, Box3D) else item.box


@dataclass(frozen=True)
class MatchedPair:
    candidate_id: int
    gt_id: int
    iou3d: float


@dataclass
class MatchResult:
    pairs: list[MatchedPair] = field(default_factory=list)
    unmatched_candidates: list[int] = field(default_factory=list)
    unmatched_gt: list[int] = field(default_factory=list)

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_candidates)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)

    @property
    def num_candidates(self) -> int:
        return self.tp + self.fp

    @property
    def num_gt(self) -> int:
        return self.tp + self.fn


def match_to_ground_truth(
    candidates: Sequence, gt: Sequence, min_iou3d: float = DEFAULT_MIN_IOU3D
) -> MatchResult:
    """One-to-one match maximizing total 3D IoU; weak pairs don't count.

    The assignment is solved on cost 1 - iou3d over all pairs, then any
    optimal pair with iou3d below min_iou3d is demoted to unmatched on both
    sides.  Inputs may be bare Box3D values or carriers with a .box field.
    """
    cand_boxes = [_as_box3d(c) for c in candidates]
    gt_boxes = [_as_box3d(g) for g in gt]
    n, m = len(cand_boxes), len(gt_boxes)
    ious = np.zeros((n, m))
    for i, cb in enumerate(cand_boxes):
        for j, gb in enumerate(gt_boxes):
            ious[i, j] = iou3d(cb, gb)
    # roundoff in the polygon clip can nudge an IoU past 1.0; costs must stay >= 0
    matching = solve_assignment(CostMatrix(np.clip(1.0 - ious, 0.0, 1.0)))
    result = MatchResult(
        unmatched_candidates=list(matching.unmatched_rows),
        unmatched_gt=list(matching.unmatched_cols),
    )
    for i, j in matching.pairs:
        if ious[i, j] < min_iou3d:
            result.unmatched_candidates.append(i)
            result.unmatched_gt.append(j)
        else:
            result.pairs.append(MatchedPair(candidate_id=i, gt_id=j, iou3d=float(ious[i, j])))
    result.pairs.sort(key=lambda p: p.candidate_id)
    result.unmatched_candidates.sort()
    result.unmatched_gt.sort()
    return result


def session_time_span_s(session: AnnotationSession) -> float:
    """Annotator time: span between the first and last recorded event."""
    if len(session.timing_events) < 2:
        return 0.0
    stamps = [ev.timestamp for ev in session.timing_events]
    return max(stamps) - min(stamps)


@dataclass
class MetricsReport:
    precision: float
    recall: float
    miss_rate: float
    num_objects: int
    mean_iou3d: Optional[float] = None
    total_time_s: Optional[float] = None
    time_per_object_s: Optional[float] = None
    tp: int = 0
    fp: int = 0
    fn: int = 0
    per_frame: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "palf_metrics": METRICS_SCHEMA_VERSION,
            "precision": self.precision,
            "recall": self.recall,
            "miss_rate": self.miss_rate,
            "num_objects": self.num_objects,
            "mean_iou3d": self.mean_iou3d,
            "total_time_s": self.total_time_s,
            "time_per_object_s": self.time_per_object_s,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "per_frame": self.per_frame,
        }


def _precision(tp: int, fp: int, num_gt: int) -> float:
    if tp + fp == 0:
        return 1.0 if num_gt == 0 else 0.0
    return tp / (tp + fp)


def _recall(tp: int, fn: int) -> float:
    if tp + fn == 0:
        return 1.0
    return tp / (tp + fn)


def compute_metrics(
    matches: Union[MatchResult, Mapping[str, MatchResult]],
    timing: Union[AnnotationSession, Mapping[str, AnnotationSession], None] = None,
) -> MetricsReport:
    """Aggregate match results (one frame or a mapping of frames) into metrics.

    Degenerate denominators follow fixed conventions: no candidates scores
    precision 1.0 against empty ground truth and 0.0 otherwise; empty ground
    truth scores recall 1.0.  mean_iou3d is absent when there are no matched
    pairs, and timing fields are absent without timing input.
    """
    if isinstance(matches, MatchResult):
        frame_matches: dict[str, MatchResult] = {"": matches}
    else:
        frame_matches = dict(matches)
    if timing is None:
        frame_timing: dict[str, AnnotationSession] = {}
    elif isinstance(timing, AnnotationSession):
        frame_timing = {key: timing for key in list(frame_matches)[:1]}
    else:
        frame_timing = dict(timing)

    tp = fp = fn = 0
    all_ious: list[float] = []
    per_frame: list[dict] = []
    total_time: Optional[float] = None
    for frame_id in sorted(frame_matches):
        m = frame_matches[frame_id]
        tp += m.tp
        fp += m.fp
        fn += m.fn
        ious = [p.iou3d for p in m.pairs]
        all_ious.extend(ious)
        row = {
            "frame_id": frame_id,
            "tp": m.tp,
            "fp": m.fp,
            "fn": m.fn,
            "num_objects": m.num_candidates,
            "precision": _precision(m.tp, m.fp, m.num_gt),
            "recall": _recall(m.tp, m.fn),
            "miss_rate": 1.0 - _recall(m.tp, m.fn),
            "mean_iou3d": float(np.mean(ious)) if ious else None,
            "time_s": None,
        }
        if frame_id in frame_timing:
            row["time_s"] = session_time_span_s(frame_timing[frame_id])
            total_time = (total_time or 0.0) + row["time_s"]
        per_frame.append(row)

    num_objects = tp + fp
    recall = _recall(tp, fn)
    report = MetricsReport(
        precision=_precision(tp, fp, tp + fn),
        recall=recall,
        miss_rate=1.0 - recall,
        num_objects=num_objects,
        mean_iou3d=float(np.mean(all_ious)) if all_ious else None,
        total_time_s=total_time,
        time_per_object_s=(
            total_time / num_objects if total_time is not None and num_objects > 0 else None
        ),
        tp=tp,
        fp=fp,
        fn=fn,
        per_frame=per_frame,
    )
    return report


_COLUMNS = [
    ("Time (s)", "time"),
    ("3D IoU (%)", "iou"),
    ("Precision (%)", "precision"),
    ("Recall (%)", "recall"),
    ("Miss Rate (%)", "miss_rate"),
    ("Number of objects", "num_objects"),
    ("Time per object (s)", "time_per_object"),
]


def _fmt(value, percent=False) -> str:
    if value is None:
        return "-"
    if percent:
        return f"{100.0 * value:.1f}"
    if isinstance(value, int):
        return str(value)
    return f"{value:.1f}"


def format_table(report: MetricsReport, label: str = "overall") -> str:
    """Render metrics as an aligned plain-text table, one row per frame plus
    an aggregate row."""
    rows = []
    for row in report.per_frame:
        if row["frame_id"] == "":
            continue
        num = row["num_objects"]
        rows.append(
            (
                row["frame_id"],
                _fmt(row["time_s"]),
                _fmt(row["mean_iou3d"], percent=True),
                _fmt(row["precision"], percent=True),
                _fmt(row["recall"], percent=True),
                _fmt(row["miss_rate"], percent=True),
                _fmt(num),
                _fmt(row["time_s"] / num if row["time_s"] is not None and num else None),
            )
        )
    rows.append(
        (
            label,
            _fmt(report.total_time_s),
            _fmt(report.mean_iou3d, percent=True),
            _fmt(report.precision, percent=True),
            _fmt(report.recall, percent=True),
            _fmt(report.miss_rate, percent=True),
            _fmt(report.num_objects),
            _fmt(report.time_per_object_s),
        )
    )
    header = ("Method",) + tuple(name for name, _ in _COLUMNS)
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(len(header))]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "  ".join("-" * w for w in widths),
    ]
    for r in rows:
        lines.append("  ".join(v.ljust(widths[i]) for i, v in enumerate(r)))
    return "\n".join(lines)
