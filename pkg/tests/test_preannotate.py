import math

import numpy as np
import pytest

from palf.errors import DegenerateFitError
from palf.geometry import Box3D, points_in_box
from palf.kitti_io import Detection3D, PointCloud
from palf.preannotate import (
    PreannotateConfig,
    expand_for_crop,
    fit_box,
    preannotate_frame,
)
from palf.synthetic import ground_plane_points, sample_cuboid_surface


def _inflated(box: Box3D, amount: float) -> Box3D:
    return Box3D(
        position=box.position,
        scale=tuple(s + amount for s in box.scale),
        yaw=box.yaw,
    )


class TestConfig:
    def test_defaults_valid(self):
        cfg = PreannotateConfig()
        assert cfg.point_threshold == 20
        assert cfg.yaw_step_rad <= cfg.yaw_search_halfwidth_rad

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"point_threshold": -1},
            {"crop_margin_m": 0.0},
            {"ground_band_m": -0.2},
            {"yaw_step_rad": 1.0, "yaw_search_halfwidth_rad": 0.5},
        ],
    )
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            PreannotateConfig(**kwargs)


class TestExpandForCrop:
    def test_grows_laterally_both_sides_and_up_only(self):
        seed = Box3D(position=(10, 0, 1.0), scale=(4, 2, 1.5), yaw=0.3)
        crop = expand_for_crop(seed, 0.3)
        assert crop.scale[0] == pytest.approx(4.6)
        assert crop.scale[1] == pytest.approx(2.6)
        assert crop.scale[2] == pytest.approx(1.8)
        assert crop.z_bottom == pytest.approx(seed.z_bottom)  # floor untouched
        assert crop.z_top == pytest.approx(seed.z_top + 0.3)
        assert crop.yaw == seed.yaw


class TestFitBox:
    def test_recovers_axis_aligned_cuboid(self, rng):
        truth = Box3D(position=(10, 0, 0), scale=(4, 2, 1.5), yaw=0.0)
        cloud = PointCloud(points=sample_cuboid_surface(truth, 2000, rng))
        fitted = fit_box(cloud, _inflated(truth, 0.2), PreannotateConfig())
        assert np.allclose(fitted.position, truth.position, atol=0.05)
        assert np.allclose(fitted.scale, truth.scale, atol=0.05)
        assert abs(fitted.yaw - truth.yaw) < math.radians(1.0)

    def test_recovers_yaw_from_offset_seed(self, rng):
        cfg = PreannotateConfig()
        truth = Box3D(position=(10, 0, 0), scale=(4, 2, 1.5), yaw=0.4)
        seed = Box3D(position=(10, 0, 0), scale=(4.4, 2.4, 1.9), yaw=0.3)
        cloud = PointCloud(points=sample_cuboid_surface(truth, 2000, rng))
        fitted = fit_box(cloud, seed, cfg)
        assert abs(fitted.yaw - 0.4) <= cfg.yaw_step_rad

    def test_three_points_degenerate(self):
        cloud = PointCloud(points=np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float))
        seed = Box3D(position=(0.5, 0.5, 0.5), scale=(3, 3, 3), yaw=0.0)
        with pytest.raises(DegenerateFitError):
            fit_box(cloud, seed, PreannotateConfig())

    def test_flat_stack_degenerate(self, rng):
        # 30 points all inside the ground band: nothing left to fit
        pts = rng.uniform(-0.5, 0.5, size=(30, 3))
        pts[:, 2] = rng.uniform(0.0, 0.05, size=30)
        cloud = PointCloud(points=pts)
        seed = Box3D(position=(0, 0, 0.5), scale=(2, 2, 1.5), yaw=0.0)
        with pytest.raises(DegenerateFitError):
            fit_box(cloud, seed, PreannotateConfig())

    def test_tightening_invariant(self, rng):
        cfg = PreannotateConfig()
        for _ in range(10):
            truth = Box3D(
                position=(rng.uniform(5, 20), rng.uniform(-5, 5), rng.uniform(-1, 1)),
                scale=(rng.uniform(3, 5), rng.uniform(1.5, 2.2), rng.uniform(1.3, 2.0)),
                yaw=rng.uniform(-math.pi, math.pi),
            )
            pts = sample_cuboid_surface(truth, int(rng.integers(300, 1500)), rng)
            cloud = PointCloud(points=pts)
            seed = _inflated(truth, 0.2)
            fitted = fit_box(cloud, seed, cfg)

            crop_idx = points_in_box(cloud, expand_for_crop(seed, cfg.crop_margin_m))
            crop = pts[crop_idx]
            z_floor = np.percentile(crop[:, 2], 5)
            body = crop[crop[:, 2] >= z_floor + cfg.ground_band_m]
            # rotate-translate round trips leave ~1e-15 residue, so containment
            # is asserted against a hair-expanded fitted box
            slack = _inflated(fitted, 1e-9)
            assert points_in_box(body, slack).size == body.shape[0]

            # the chosen yaw's rectangle area is minimal over the search grid
            offsets = np.arange(
                -cfg.yaw_search_halfwidth_rad,
                cfg.yaw_search_halfwidth_rad + 0.5 * cfg.yaw_step_rad,
                cfg.yaw_step_rad,
            )
            fitted_area = fitted.scale[0] * fitted.scale[1]
            for yaw in seed.yaw + offsets:
                cos, sin = math.cos(yaw), math.sin(yaw)
                xr = body[:, 0] * cos + body[:, 1] * sin
                yr = -body[:, 0] * sin + body[:, 1] * cos
                area = (xr.max() - xr.min()) * (yr.max() - yr.min())
                assert fitted_area <= area + 1e-9

    def test_idempotent_within_tolerance(self, rng):
        cfg = PreannotateConfig()
        truth = Box3D(position=(12, 3, -0.5), scale=(4.4, 1.9, 1.6), yaw=1.0)
        cloud = PointCloud(points=sample_cuboid_surface(truth, 1500, rng))
        once = fit_box(cloud, _inflated(truth, 0.2), cfg)
        twice = fit_box(cloud, once, cfg)
        assert np.allclose(twice.scale, once.scale, atol=0.05)
        assert np.allclose(twice.position, once.position, atol=0.05)

    def test_works_with_ground_plane(self, rng):
        cfg = PreannotateConfig()
        ground_z = -1.73
        truth = Box3D(position=(15, 2, ground_z + 0.8), scale=(4, 2, 1.6), yaw=0.5)
        pts = np.vstack(
            [
                sample_cuboid_surface(truth, 1200, rng),
                ground_plane_points(5000, rng, z=ground_z),
            ]
        )
        fitted = fit_box(PointCloud(points=pts), _inflated(truth, 0.2), cfg)
        assert np.allclose(fitted.scale, truth.scale, atol=0.05)
        assert np.allclose(fitted.position, truth.position, atol=0.05)


class TestPreannotateFrame:
    def _detection(self, box, score=0.9):
        return Detection3D(box=box, class_label="Car", score=score)

    def test_empty_detections(self, rng):
        cloud = PointCloud(points=rng.uniform(-10, 10, (100, 3)))
        assert preannotate_frame(cloud, [], PreannotateConfig()) == []

    def test_sparse_detection_passes_through_bit_identical(self, rng):
        cfg = PreannotateConfig(point_threshold=20)
        box = Box3D(position=(10, 0, 0), scale=(4, 2, 1.5), yaw=0.25)
        cloud = PointCloud(points=sample_cuboid_surface(box, 3, rng))
        out = preannotate_frame(cloud, [self._detection(box)], cfg)
        assert len(out) == 1
        assert out[0].box is box  # the very same object, not a reconstruction
        assert not out[0].refit
        assert out[0].status == "pre_annotated"

    def test_dense_detection_is_refit(self, rng):
        cfg = PreannotateConfig()
        truth = Box3D(position=(10, 0, 0), scale=(4, 2, 1.5), yaw=0.0)
        cloud = PointCloud(points=sample_cuboid_surface(truth, 800, rng))
        out = preannotate_frame(cloud, [self._detection(_inflated(truth, 0.3))], cfg)
        assert out[0].refit
        assert np.allclose(out[0].box.scale, truth.scale, atol=0.05)
        assert out[0].box == fit_box(cloud, _inflated(truth, 0.3), cfg)

    def test_low_score_detections_dropped(self, rng):
        cfg = PreannotateConfig(min_score=0.3)
        box = Box3D(position=(10, 0, 0), scale=(4, 2, 1.5), yaw=0.0)
        cloud = PointCloud(points=sample_cuboid_surface(box, 500, rng))
        dets = [self._detection(box, score=0.29), self._detection(box, score=0.31)]
        out = preannotate_frame(cloud, dets, cfg)
        assert len(out) == 1
        assert out[0].score == 0.31

    def test_gate_counts_points_in_expanded_crop(self, rng):
        # 22 points right outside the seed but inside the margin ring trip the gate
        cfg = PreannotateConfig(point_threshold=20, crop_margin_m=0.3)
        seed = Box3D(position=(0, 0, 0), scale=(2, 2, 1), yaw=0.0)
        ring = np.zeros((22, 3))
        # outside the seed half-length 1.0 but inside 1.0 + 0.3
        ring[:, 0] = rng.uniform(1.05, 1.25, size=22)
        ring[:, 1] = np.linspace(-0.8, 0.8, 22)
        ring[:, 2] = np.linspace(-0.3, 0.6, 22)  # some above the seed roof
        out = preannotate_frame(PointCloud(points=ring), [self._detection(seed)], cfg)
        assert out[0].refit

    def test_degenerate_fit_falls_back_to_detection(self, rng):
        # plenty of points but all inside the ground band
        cfg = PreannotateConfig(point_threshold=20)
        pts = rng.uniform(-0.9, 0.9, size=(40, 3))
        pts[:, 2] = rng.uniform(-0.5, -0.45, size=40)
        seed = Box3D(position=(0, 0, 0), scale=(2, 2, 1), yaw=0.1)
        out = preannotate_frame(PointCloud(points=pts), [self._detection(seed)], cfg)
        assert len(out) == 1
        assert out[0].box is seed
        assert not out[0].refit

    def test_output_order_follows_input(self, rng):
        cfg = PreannotateConfig()
        boxes = [
            Box3D(position=(8 + 6 * i, 0, 0), scale=(4, 2, 1.5), yaw=0.1 * i)
            for i in range(4)
        ]
        pts = np.vstack([sample_cuboid_surface(b, 400, rng) for b in boxes])
        cloud = PointCloud(points=pts)
        out = preannotate_frame(cloud, [self._detection(b) for b in boxes], cfg)
        assert [round(b.box.position[0]) for b in out] == [8, 14, 20, 26]

    def test_deterministic(self, rng):
        truth = Box3D(position=(10, 1, 0), scale=(4.5, 2.0, 1.5), yaw=0.8)
        cloud = PointCloud(points=sample_cuboid_surface(truth, 700, rng))
        dets = [self._detection(_inflated(truth, 0.25))]
        first = preannotate_frame(cloud, dets, PreannotateConfig())
        second = preannotate_frame(cloud, dets, PreannotateConfig())
        assert first[0].box == second[0].box
