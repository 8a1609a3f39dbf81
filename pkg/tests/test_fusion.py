import json
import math

import numpy as np
import pytest

from palf.errors import CalibrationMismatchWarning
from palf.fusion import (
    FusionConfig,
    FusionReport,
    WRONG_LOW_IOU,
    WRONG_UNMATCHED_3D,
    backproject_missed,
    fuse_frame,
)
from palf.geometry import Box2D, Box3D, iou2d, points_in_box, project_box3d_to_rect, project_points
from palf.kitti_io import Detection2D, PointCloud
from palf.synthetic import default_calibration, sample_cuboid_surface

from conftest import random_box3d


CALIB = default_calibration()


def det2d(rect: Box2D, score: float = 0.9, label: str = "Car") -> Detection2D:
    return Detection2D(box=rect, class_label=label, score=score)


def front_box(x=15.0, y=0.0, z=0.0, yaw=0.3) -> Box3D:
    return Box3D(position=(x, y, z), scale=(4, 2, 1.6), yaw=yaw)


def empty_cloud() -> PointCloud:
    return PointCloud(points=np.zeros((0, 3)))


class TestFuseFrameClassification:
    def test_empty_inputs_empty_report(self):
        report = fuse_frame(empty_cloud(), CALIB, [], [], FusionConfig())
        assert report.confirmed == []
        assert report.wrong == []
        assert report.missed == []
        assert report.out_of_view == []
        assert report.highlighted_wrong_points.size == 0
        assert report.highlighted_missed_points.size == 0

    def test_exact_projection_confirmed(self):
        box = front_box()
        rect = project_box3d_to_rect(CALIB, box)
        report = fuse_frame(empty_cloud(), CALIB, [box], [det2d(rect)], FusionConfig())
        assert len(report.confirmed) == 1
        pair = report.confirmed[0]
        assert (pair.box3d_id, pair.box2d_id) == (0, 0)
        assert pair.iou2d == pytest.approx(1.0)
        assert report.wrong == [] and report.missed == []

    def test_partial_overlap_above_threshold_confirmed(self):
        box = front_box()
        rect = project_box3d_to_rect(CALIB, box)
        # shift by a quarter width: IoU stays comfortably above 0.5
        shifted = Box2D(
            rect.xmin + rect.width * 0.1,
            rect.ymin,
            rect.xmax + rect.width * 0.1,
            rect.ymax,
        )
        expected = iou2d(rect, shifted)
        assert expected > 0.5
        report = fuse_frame(empty_cloud(), CALIB, [box], [det2d(shifted)], FusionConfig())
        assert len(report.confirmed) == 1
        assert report.confirmed[0].iou2d == pytest.approx(expected)

    def test_low_iou_pair_flags_both_sides(self):
        box = front_box()
        rect = project_box3d_to_rect(CALIB, box)
        far = Box2D(rect.xmax + 50, rect.ymin, rect.xmax + 50 + rect.width, rect.ymax)
        report = fuse_frame(empty_cloud(), CALIB, [box], [det2d(far)], FusionConfig())
        assert report.confirmed == []
        assert len(report.wrong) == 1
        assert report.wrong[0].reason == WRONG_LOW_IOU
        assert report.wrong[0].iou2d == pytest.approx(0.0)
        assert len(report.missed) == 1
        assert report.missed[0].box2d_id == 0

    def test_unmatched_3d_is_wrong(self):
        report = fuse_frame(empty_cloud(), CALIB, [front_box()], [], FusionConfig())
        assert len(report.wrong) == 1
        assert report.wrong[0].reason == WRONG_UNMATCHED_3D
        assert report.wrong[0].iou2d is None

    def test_unmatched_2d_is_missed(self):
        rect = Box2D(100, 100, 200, 200)
        report = fuse_frame(empty_cloud(), CALIB, [], [det2d(rect)], FusionConfig())
        assert report.confirmed == []
        assert len(report.missed) == 1
        assert report.missed[0].rect == rect
        assert report.missed_image_regions == [rect]

    def test_behind_camera_goes_out_of_view(self):
        behind = front_box(x=-15.0)
        ahead = front_box(x=15.0)
        rect = project_box3d_to_rect(CALIB, ahead)
        report = fuse_frame(
            empty_cloud(), CALIB, [behind, ahead], [det2d(rect)], FusionConfig()
        )
        assert report.out_of_view == [0]
        assert [p.box3d_id for p in report.confirmed] == [1]
        assert report.wrong == []

    def test_low_score_2d_detections_ignored(self):
        box = front_box()
        rect = project_box3d_to_rect(CALIB, box)
        weak = det2d(Box2D(5, 5, 50, 50), score=0.2)
        report = fuse_frame(
            empty_cloud(), CALIB, [box], [weak, det2d(rect, score=0.8)], FusionConfig()
        )
        assert len(report.confirmed) == 1
        assert report.confirmed[0].box2d_id == 1  # ids index the original input
        assert report.missed == []

    def test_class_mismatch_recorded_but_still_scored(self):
        box = front_box()
        rect = project_box3d_to_rect(CALIB, box)
        from palf.kitti_io import Detection3D

        carrier = Detection3D(box=box, class_label="Car", score=0.9)
        report = fuse_frame(
            empty_cloud(), CALIB, [carrier], [det2d(rect, label="Pedestrian")], FusionConfig()
        )
        assert len(report.confirmed) == 1
        assert report.class_mismatches == [(0, 0)]

    def test_calibration_mismatch_warning(self):
        # forward boxes, detections present, nothing projects: flipped transform
        bad_calib = default_calibration()
        flipped = np.array(
            [[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [-1.0, 0.0, 0.0, 0.0]]
        )
        bad = type(bad_calib)(
            cam_projection=bad_calib.cam_projection,
            rect_rotation=bad_calib.rect_rotation,
            lidar_to_cam=flipped,
            image_size=bad_calib.image_size,
        )
        with pytest.warns(CalibrationMismatchWarning):
            report = fuse_frame(
                empty_cloud(), bad, [front_box()], [det2d(Box2D(0, 0, 50, 50))], FusionConfig()
            )
        assert report.calibration_warning is not None
        assert report.out_of_view == [0]


class TestFusionInvariants:
    def _random_scene(self, rng, n3d, n2d):
        boxes = [random_box3d(rng, center_range=25.0) for _ in range(n3d)]
        dets = []
        w, h = CALIB.image_size
        for _ in range(n2d):
            x0, y0 = rng.uniform(0, w - 20), rng.uniform(0, h - 20)
            dets.append(
                det2d(
                    Box2D(x0, y0, x0 + rng.uniform(5, 200), y0 + rng.uniform(5, 100)),
                    score=float(rng.uniform(0, 1)),
                )
            )
        return boxes, dets

    def test_partition_fuzz(self, rng):
        cfg = FusionConfig()
        for _ in range(100):
            n3d, n2d = int(rng.integers(0, 7)), int(rng.integers(0, 7))
            boxes, dets = self._random_scene(rng, n3d, n2d)
            report = fuse_frame(empty_cloud(), CALIB, boxes, dets, cfg)
            assert len(report.confirmed) + len(report.wrong) + len(report.out_of_view) == n3d
            eligible = sum(1 for d in dets if d.score >= cfg.min_2d_score)
            assert len(report.confirmed) + len(report.missed) == eligible
            seen3d = sorted(
                [p.box3d_id for p in report.confirmed]
                + [w.box3d_id for w in report.wrong]
                + report.out_of_view
            )
            assert seen3d == list(range(n3d))

    def test_wrong_list_monotone_in_threshold(self, rng):
        for _ in range(30):
            boxes, dets = self._random_scene(rng, int(rng.integers(1, 6)), int(rng.integers(1, 6)))
            previous_wrong: set = set()
            previous_oov = None
            for threshold in np.linspace(0.1, 0.9, 9):
                report = fuse_frame(
                    empty_cloud(), CALIB, boxes, dets, FusionConfig(iou2d_threshold=float(threshold))
                )
                wrong_ids = {w.box3d_id for w in report.wrong}
                assert previous_wrong <= wrong_ids
                if previous_oov is not None:
                    assert report.out_of_view == previous_oov
                previous_wrong = wrong_ids
                previous_oov = report.out_of_view

    def test_perfect_scene_no_flags(self, rng):
        boxes = [front_box(x=10.0 + 7 * i, y=2.0 * i - 3, yaw=0.2 * i) for i in range(4)]
        dets = [det2d(project_box3d_to_rect(CALIB, b)) for b in boxes]
        report = fuse_frame(empty_cloud(), CALIB, boxes, dets, FusionConfig())
        assert report.wrong == [] and report.missed == []
        assert len(report.confirmed) == 4

    def test_determinism(self, rng):
        boxes, dets = self._random_scene(rng, 5, 5)
        cloud = PointCloud(points=rng.uniform(-20, 20, size=(300, 3)))
        first = fuse_frame(cloud, CALIB, boxes, dets, FusionConfig())
        second = fuse_frame(cloud, CALIB, boxes, dets, FusionConfig())
        assert first.to_dict() == second.to_dict()

    def test_report_json_serializable(self, rng):
        boxes, dets = self._random_scene(rng, 3, 4)
        cloud = PointCloud(points=rng.uniform(-20, 20, size=(100, 3)))
        report = fuse_frame(cloud, CALIB, boxes, dets, FusionConfig())
        doc = json.loads(json.dumps(report.to_dict()))
        assert doc["palf_fusion"] == 1
        for key in (
            "confirmed",
            "wrong",
            "missed",
            "out_of_view",
            "highlighted_wrong_points",
            "highlighted_missed_points",
            "missed_image_regions",
        ):
            assert key in doc


class TestHighlights:
    def test_wrong_points_are_union_of_in_box_points(self, rng):
        box_a = front_box(x=12.0, y=-3.0)
        box_b = front_box(x=25.0, y=4.0, yaw=1.2)
        pts = np.vstack(
            [
                sample_cuboid_surface(box_a, 150, rng),
                sample_cuboid_surface(box_b, 150, rng),
                rng.uniform(-30, 30, size=(200, 3)),
            ]
        )
        cloud = PointCloud(points=pts)
        report = fuse_frame(cloud, CALIB, [box_a, box_b], [], FusionConfig())
        assert [w.reason for w in report.wrong] == [WRONG_UNMATCHED_3D] * 2
        expected = sorted(
            set(points_in_box(cloud, box_a).tolist()) | set(points_in_box(cloud, box_b).tolist())
        )
        assert report.highlighted_wrong_points.tolist() == expected

    def test_backproject_empty_rects(self):
        cloud = PointCloud(points=np.random.default_rng(0).uniform(-10, 10, (50, 3)))
        assert backproject_missed(cloud, CALIB, []).size == 0

    def test_backproject_point_at_rect_center(self):
        # place a 3D point whose projection is the exact center of the rect
        target = np.array([[20.0, 0.0, 0.0]])
        proj = project_points(CALIB, target)
        u, v = proj.u[0], proj.v[0]
        rect = Box2D(u - 10, v - 10, u + 10, v + 10)
        cloud = PointCloud(points=np.vstack([target, [[-20.0, 0.0, 0.0]]]))
        idx = backproject_missed(cloud, CALIB, [rect])
        assert idx.tolist() == [0]

    def test_backproject_matches_projection_oracle(self, rng):
        pts = np.column_stack(
            [
                rng.uniform(5, 40, 300),
                rng.uniform(-15, 15, 300),
                rng.uniform(-3, 3, 300),
            ]
        )
        cloud = PointCloud(points=pts)
        rect = Box2D(300, 100, 700, 300)
        got = backproject_missed(cloud, CALIB, [rect])
        proj = project_points(CALIB, cloud)
        want = [
            i
            for i in range(len(pts))
            if proj.valid[i]
            and rect.xmin <= proj.u[i] <= rect.xmax
            and rect.ymin <= proj.v[i] <= rect.ymax
        ]
        assert got.tolist() == want

    def test_missed_highlights_cover_only_missed_rects(self, rng):
        # one 2D-only detection: its rect interior points light up, others don't
        hidden = front_box(x=18.0, y=-2.0)
        rect = project_box3d_to_rect(CALIB, hidden)
        inside = sample_cuboid_surface(hidden, 100, rng)
        outside = np.array([[30.0, 12.0, 0.0], [-10.0, 0.0, 0.0]])
        cloud = PointCloud(points=np.vstack([inside, outside]))
        report = fuse_frame(cloud, CALIB, [], [det2d(rect)], FusionConfig())
        assert len(report.missed) == 1
        proj = project_points(CALIB, cloud)
        for i in report.highlighted_missed_points:
            assert proj.valid[i]
            assert rect.xmin <= proj.u[i] <= rect.xmax
            assert rect.ymin <= proj.v[i] <= rect.ymax
        # surface points of the hidden object project inside its own rect
        assert set(range(100)) <= set(report.highlighted_missed_points.tolist())
