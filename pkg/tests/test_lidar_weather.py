import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_cloud
from wxdepth.core import PointCloud, severity_value
from wxdepth.lidar_weather import (
    CLUTTER,
    ORIGINAL,
    RELOCATED,
    SPURIOUS,
    LidarWeatherParams,
    corrupt,
    corrupt_fog,
    corrupt_rain,
    corrupt_snow,
    fog_response,
)
from wxdepth.rng import RngStream
from wxdepth.synthetic import uniform_range_cloud

# the hand-worked examples assume this detection floor
HAND_PARAMS = LidarWeatherParams(noise_floor=0.03)


def _repeated(r, i, n):
    return PointCloud(np.tile([r, 0.0, 0.0, i], (n, 1)))


def _on_source_ray(out, cloud, trace):
    src = cloud.xyz[trace.source]
    cross = np.cross(out.xyz, src)
    dot = np.einsum("ij,ij->i", out.xyz, src)
    return np.all(np.abs(cross) <= 1e-9 * np.maximum(1.0, cloud.ranges[trace.source] ** 2)[:, None]) and np.all(dot > 0)


class TestFog:
    def test_zero_alpha_is_identity(self, rng):
        cloud = random_cloud(rng)
        assert corrupt_fog(cloud, 0.0).equals(cloud)

    def test_dense_fog_drops_point(self):
        # p_h = 0.8 e^-4 = 0.01465, p_s = 0.5 * 0.2 * e^-2 = 0.01353, both < 0.03
        p_h = 0.8 * math.exp(-4.0)
        p_s = 0.5 * 0.2 * math.exp(-2.0)
        assert p_h == pytest.approx(0.01465, abs=1e-5) and p_s == pytest.approx(0.01353, abs=1e-5)
        kind, _, _ = fog_response([10.0], [0.8], 0.2, [5.0], HAND_PARAMS)
        assert kind.tolist() == [-1]

    def test_light_fog_keeps_point(self):
        cloud = PointCloud([[3.0, 0.0, 0.0, 0.9]])
        out, trace = corrupt_fog(cloud, 0.01, HAND_PARAMS, RngStream(5), trace=True)
        assert trace.kind.tolist() == [ORIGINAL]
        assert out.xyz.tolist() == [[3.0, 0.0, 0.0]]
        assert out.intensity[0] == pytest.approx(0.9 * math.exp(-0.06), rel=1e-12)
        assert out.intensity[0] == pytest.approx(0.8476, abs=1e-4)

    def test_backscatter_wins_when_stronger(self):
        # weak distant target, strong near backscatter
        kind, r, i = fog_response([60.0], [0.2], 0.2, [2.0], HAND_PARAMS)
        p_s = 0.5 * 0.2 * math.exp(-0.8)
        assert kind.tolist() == [RELOCATED]
        assert r[0] == 2.0 and i[0] == pytest.approx(p_s)

    def test_no_window_means_no_backscatter(self):
        kind, _, i = fog_response([1.0], [0.9], 0.2, [np.nan], HAND_PARAMS)
        assert kind.tolist() == [ORIGINAL] and i[0] == pytest.approx(0.9 * math.exp(-0.4))

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            corrupt_fog(PointCloud([[1.0, 0, 0, 0.5]]), -0.1)


class TestRain:
    def test_zero_rate_is_identity(self, rng):
        cloud = random_cloud(rng)
        assert corrupt_rain(cloud, 0.0).equals(cloud)

    def test_extinction_coefficient(self):
        assert HAND_PARAMS.rain_alpha(200.0) == pytest.approx(2.0e-3 * 200**0.6)
        assert HAND_PARAMS.rain_alpha(200.0) == pytest.approx(0.04804, abs=1e-5)
        assert HAND_PARAMS.rain_alpha(10.0) == pytest.approx(0.00796, abs=1e-5)

    def test_heavy_rain_drops_distant_return(self):
        cloud = PointCloud([[50.0, 0.0, 0.0, 0.5]])
        # p_h = 0.5 e^-4.804 = 0.0041 < 0.03
        assert 0.5 * math.exp(-2 * 0.04804 * 50) == pytest.approx(0.00410, abs=1e-5)
        for seed in range(20):
            _, trace = corrupt_rain(cloud, 200.0, HAND_PARAMS, RngStream(seed), trace=True)
            assert ORIGINAL not in trace.kind.tolist()

    def test_light_rain_keeps_return_and_scatter_rate(self):
        n = 200_000
        cloud = _repeated(10.0, 0.9, n)
        out, trace = corrupt_rain(cloud, 10.0, HAND_PARAMS, RngStream(11), trace=True)
        alpha = 2.0e-3 * 10**0.6
        orig = trace.kind == ORIGINAL
        assert orig.sum() == n
        assert np.allclose(out.intensity[orig], 0.9 * math.exp(-2 * alpha * 10.0))
        # 0.9 e^-0.15924; a hand value of 0.7674 carries rounding of alpha
        assert out.intensity[orig][0] == pytest.approx(0.767510, abs=1e-6)
        p_spur = 0.3 * (1 - math.exp(-alpha * 10.0))
        assert p_spur == pytest.approx(0.02296, abs=1e-5)
        frac = (trace.kind == SPURIOUS).mean()
        assert abs(frac - p_spur) < 4 * math.sqrt(p_spur * (1 - p_spur) / n)

    def test_spurious_returns_nearer_than_source(self, rng):
        cloud = random_cloud(rng, 5000)
        out, trace = corrupt_rain(cloud, 200.0, rng=RngStream(2), trace=True)
        spur = trace.kind == SPURIOUS
        assert spur.any()
        assert np.all(out.ranges[spur] < cloud.ranges[trace.source[spur]])


class TestSnow:
    def test_zero_rate_is_identity(self, rng):
        cloud = random_cloud(rng)
        assert corrupt_snow(cloud, 0.0).equals(cloud)

    def test_empty_cloud(self):
        out = corrupt_snow(PointCloud(np.empty((0, 4))), 0.5)
        assert len(out) == 0

    def test_heavy_snow_attenuation_and_occlusion_rate(self):
        alpha = 1.5e-2 * 2.5**0.7
        assert alpha == pytest.approx(0.02848, abs=1e-5)
        assert 0.6 * math.exp(-2 * alpha * 40) == pytest.approx(0.0614, abs=1e-4)
        p_occ = 0.6 * (1 - math.exp(-alpha * 40))
        assert p_occ == pytest.approx(0.408, abs=1e-3)

        n = 100_000
        cloud = _repeated(40.0, 0.6, n)
        out, trace = corrupt_snow(cloud, 2.5, HAND_PARAMS, RngStream(4), trace=True)
        assert len(out) == n  # survivors plus clutter replacements
        frac = (trace.kind == CLUTTER).mean()
        assert abs(frac - p_occ) < 4 * math.sqrt(p_occ * (1 - p_occ) / n)
        orig = trace.kind == ORIGINAL
        assert np.allclose(out.intensity[orig], 0.6 * math.exp(-2 * alpha * 40))
        assert np.all((out.ranges[~orig] >= 0.5) & (out.ranges[~orig] < 12.0))


class TestProperties:
    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from(["fog", "rain", "snow"]), st.integers(1, 3), st.integers(0, 2**32))
    def test_returns_stay_on_source_ray(self, weather, level, seed):
        gen = np.random.default_rng(seed)
        cloud = random_cloud(gen, 300)
        out, trace = corrupt(cloud, weather, severity_value(weather, level)[0], rng=RngStream(seed), trace=True)
        assert _on_source_ray(out, cloud, trace)
        assert np.all((out.intensity >= 0) & (out.intensity <= 1))
        if weather != "rain":
            assert np.all(out.ranges <= cloud.ranges[trace.source] * (1 + 1e-12))

    @settings(max_examples=20, deadline=None)
    @given(st.sampled_from(["fog", "rain", "snow"]), st.integers(1, 3), st.integers(0, 2**32))
    def test_deterministic(self, weather, level, seed):
        cloud = random_cloud(np.random.default_rng(seed), 200)
        v = severity_value(weather, level)[0]
        a = corrupt(cloud, weather, v, rng=RngStream(seed))
        b = corrupt(cloud, weather, v, rng=RngStream(seed))
        assert a.equals(b)

    @pytest.mark.parametrize("weather", ["fog", "rain", "snow"])
    def test_mean_range_falls_with_severity(self, weather):
        cloud = uniform_range_cloud(20_000, seed=3)
        means = [corrupt(cloud, weather, severity_value(weather, lv)[0], rng=RngStream(9)).ranges.mean()
                 for lv in (1, 2, 3)]
        assert means[0] > means[1] > means[2]

    def test_clear_dispatch_and_unknown(self, rng):
        cloud = random_cloud(rng, 50)
        assert corrupt(cloud, "clear", 0.0).equals(cloud)
        with pytest.raises(ValueError):
            corrupt(cloud, "hail", 1.0)
