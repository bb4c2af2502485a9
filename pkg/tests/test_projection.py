import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wxdepth.core import CameraCalibration, Frame, PointCloud
from wxdepth.projection import (
    PixelSamples,
    backproject_pixel,
    project_cloud,
    project_points,
    rasterize,
    round_half_away,
    to_camera_frame,
)


def _cloud(*xyz, frame=Frame.SENSOR):
    return PointCloud(np.column_stack([np.array(xyz, float).reshape(-1, 3), np.full(len(xyz), 0.5)]), frame)


def _samples(u, v, d):
    return PixelSamples(np.array(u), np.array(v), np.array(d, float), np.arange(len(u)))


class TestCameraFrame:
    def test_identity(self, identity_calib):
        out = to_camera_frame(_cloud((1, 2, 3)), identity_calib)
        assert out.xyz.tolist() == [[1.0, 2.0, 3.0]]
        assert out.frame is Frame.CAMERA

    def test_behind_camera_removed(self, identity_calib):
        assert len(to_camera_frame(_cloud((1, 2, -5)), identity_calib)) == 0

    def test_translation(self):
        ext = np.hstack([np.eye(3), [[0.0], [0.0], [2.0]]])
        calib = CameraCalibration(700, 700, 600, 180, extrinsic=ext)
        assert to_camera_frame(_cloud((0, 0, 3)), calib).xyz.tolist() == [[0.0, 0.0, 5.0]]

    def test_z_min_boundary(self, identity_calib):
        out, keep = to_camera_frame(_cloud((0, 0, 0.1), (0, 0, 0.1001)), identity_calib, return_index=True)
        assert keep.tolist() == [1]

    def test_rect_applied_after_extrinsic(self):
        rect = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        ext = np.hstack([np.eye(3), [[1.0], [0.0], [0.0]]])
        calib = CameraCalibration(1, 1, 0, 0, rect=rect, extrinsic=ext)
        # rect @ ((1,0,4) + (1,0,0)) = rect @ (2,0,4) = (0,2,4)
        assert to_camera_frame(_cloud((1, 0, 4)), calib).xyz.tolist() == [[0.0, 2.0, 4.0]]


class TestPinhole:
    def test_principal_point(self, identity_calib):
        s = project_points(_cloud((0, 0, 10), frame=Frame.CAMERA), identity_calib)
        assert (s.u.tolist(), s.v.tolist(), s.depth.tolist()) == ([600], [180], [10.0])

    def test_offset_point(self, identity_calib):
        s = project_points(_cloud((1.4, 0.36, 10), frame=Frame.CAMERA), identity_calib)
        assert (s.u.tolist(), s.v.tolist(), s.depth.tolist()) == ([698], [205], [10.0])

    def test_out_of_bounds(self, identity_calib):
        # u = 700 * x / 10 + 600 = -3
        s = project_points(_cloud((-603 / 70, 0, 10), frame=Frame.CAMERA), identity_calib)
        assert len(s) == 0

    def test_round_half_away_from_zero(self):
        assert round_half_away([0.5, 1.5, 2.5, -0.5, -1.5, 2.4999]).tolist() == [1, 2, 3, -1, -2, 2]

    def test_needs_camera_frame(self, identity_calib):
        with pytest.raises(ValueError):
            project_points(_cloud((0, 0, 10)), identity_calib)


class TestRasterize:
    def test_min_depth_wins(self):
        grid = rasterize(_samples([5, 5], [5, 5], [12.0, 7.5]), 10, 10)
        assert grid.values[5, 5] == 7.5
        assert grid.valid.sum() == 1

    def test_empty(self):
        grid = rasterize(_samples([], [], []), 4, 3)
        assert grid.shape == (3, 4) and not grid.valid.any()

    def test_single(self):
        grid = rasterize(_samples([1], [2], [3.25]), 4, 3)
        assert grid.valid.sum() == 1 and grid.values[2, 1] == 3.25

    def test_tie_goes_to_smaller_source(self):
        s = PixelSamples(np.array([0, 0]), np.array([0, 0]), np.array([4.0, 4.0]), np.array([9, 2]))
        _, winners = rasterize(s, 2, 2, return_winners=True)
        assert winners[0, 0] == 2

    def test_d_max_clamp(self):
        grid = rasterize(_samples([0], [0], [300.0]), 2, 2, d_max=255.0)
        assert grid.values[0, 0] == 255.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32), st.integers(1, 60))
    def test_permutation_invariant_and_min_oracle(self, seed, n):
        gen = np.random.default_rng(seed)
        u, v = gen.integers(0, 6, n), gen.integers(0, 4, n)
        d = gen.choice([1.0, 2.0, 3.5, 7.0], n)
        s = PixelSamples(u, v, d, np.arange(n))
        base = rasterize(s, 6, 4).values
        perm = rasterize(s.permuted(gen.permutation(n)), 6, 4).values
        assert np.array_equal(base, perm)
        oracle = np.zeros((4, 6))
        for uu, vv, dd in zip(u, v, d):
            if oracle[vv, uu] == 0 or dd < oracle[vv, uu]:
                oracle[vv, uu] = dd
        assert np.array_equal(base, oracle)


class TestFullProjection:
    def test_backprojection_round_trip(self):
        rot = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
        c, s = np.cos(0.01), np.sin(0.01)
        rect = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        calib = CameraCalibration(721.5, 721.5, 609.6, 172.9, rect=rect,
                                  extrinsic=np.hstack([rot, [[0.0], [-0.08], [-0.27]]]))
        pts = np.array([backproject_pixel(u, v, d, calib) for u, v, d in [(100, 50, 12.0), (700, 300, 40.0)]])
        grid = project_cloud(PointCloud(np.column_stack([pts, [0.5, 0.5]])), calib)
        assert grid.values[50, 100] == pytest.approx(12.0, abs=1e-9)
        assert grid.values[300, 700] == pytest.approx(40.0, abs=1e-9)
        assert grid.valid.sum() == 2
