"""Fog, rain and snow corruption of raw LiDAR point clouds.

Each model splits the received signal into an attenuated hard-target return
and a particle (soft-target) return. Random draws are keyed per point index so
the output does not depend on processing order.

Per-point draw slots:
    0  position of the particle return along the ray
    1  whether a spurious / occluding return happens
    2  intensity of the particle return
    3  range jitter (uses 3 and 4)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PointCloud
from .rng import RngStream

ORIGINAL, RELOCATED, SPURIOUS, CLUTTER = 0, 1, 2, 3


@dataclass(frozen=True)
class LidarWeatherParams:
    noise_floor: float = 0.01
    fog_backscatter_gain: float = 0.5
    fog_scatter_range: tuple = (1.5, 25.0)
    rain_extinction_coeffs: tuple = (2.0e-3, 0.6)
    rain_scatter_gain: float = 0.3
    rain_range_jitter_base: float = 0.02
    snow_extinction_coeffs: tuple = (1.5e-2, 0.7)
    snow_clutter_range: tuple = (0.5, 12.0)
    snow_occlusion_gain: float = 0.6

    def __post_init__(self):
        if not 0.0 < self.noise_floor < 1.0:
            raise ValueError("noise_floor must lie in (0, 1)")
        gains = (self.fog_backscatter_gain, self.rain_scatter_gain, self.rain_range_jitter_base, self.snow_occlusion_gain)
        if min(gains) < 0:
            raise ValueError("gains must be non-negative")
        for lo, hi in (self.fog_scatter_range, self.snow_clutter_range):
            if not lo < hi:
                raise ValueError("range windows need min < max")

    def rain_alpha(self, rain_rate: float) -> float:
        c1, c2 = self.rain_extinction_coeffs
        return c1 * rain_rate**c2 if rain_rate > 0 else 0.0

    def snow_alpha(self, snow_rate: float) -> float:
        s1, s2 = self.snow_extinction_coeffs
        return s1 * snow_rate**s2 if snow_rate > 0 else 0.0


@dataclass(frozen=True, eq=False)
class LidarTrace:
    """Provenance of each output point: source index into the input and kind."""

    source: np.ndarray
    kind: np.ndarray

    def original_mask(self) -> np.ndarray:
        return self.kind == ORIGINAL


def _assemble(cloud, new_range, intensity, source, kind, trace):
    # stable order: by source index, the source's own return before any extra one
    order = np.lexsort((kind, source))
    source, kind = source[order], kind[order]
    new_range, intensity = new_range[order], intensity[order]
    xyz = cloud.xyz[source]
    r0 = np.sqrt(np.einsum("ij,ij->i", xyz, xyz))
    scaled = xyz * (new_range / r0)[:, None]
    # points whose range is unchanged keep their exact coordinates
    same = new_range == r0
    scaled[same] = xyz[same]
    out = PointCloud(np.column_stack([scaled, intensity]), cloud.frame)
    if trace:
        return out, LidarTrace(source, kind)
    return out


def _identity(cloud, trace):
    out = PointCloud(cloud.points, cloud.frame)
    if trace:
        n = len(cloud)
        return out, LidarTrace(np.arange(n), np.zeros(n, dtype=np.int64))
    return out


def fog_response(ranges, intensity, alpha, scatter_range, params: LidarWeatherParams):
    """Decide the fate of each beam given its particle-return range.

    ``scatter_range`` holds the sampled backscatter range per point, NaN where
    the scatter window does not overlap (0, R). Returns (kind, range, intensity)
    with kind -1 for dropped points.
    """
    ranges = np.asarray(ranges, dtype=np.float64)
    intensity = np.asarray(intensity, dtype=np.float64)
    scatter_range = np.asarray(scatter_range, dtype=np.float64)
    p_hard = intensity * np.exp(-2.0 * alpha * ranges)
    has_soft = np.isfinite(scatter_range)
    p_soft = np.where(
        has_soft,
        params.fog_backscatter_gain * alpha * np.exp(-2.0 * alpha * np.where(has_soft, scatter_range, 0.0)),
        0.0,
    )
    floor = params.noise_floor
    kind = np.full(ranges.shape, ORIGINAL, dtype=np.int64)
    out_r = ranges.copy()
    out_i = p_hard.copy()
    relocate = p_soft > p_hard
    kind[relocate] = RELOCATED
    out_r[relocate] = scatter_range[relocate]
    out_i[relocate] = np.minimum(p_soft[relocate], 1.0)
    kind[(p_hard < floor) & (p_soft < floor)] = -1
    return kind, out_r, out_i


def corrupt_fog(cloud: PointCloud, alpha: float, params: LidarWeatherParams = LidarWeatherParams(),
                rng: RngStream = RngStream(0), trace: bool = False):
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha == 0 or len(cloud) == 0:
        return _identity(cloud, trace)
    r = cloud.ranges
    idx = np.arange(len(cloud))
    lo = params.fog_scatter_range[0]
    hi = np.minimum(params.fog_scatter_range[1], r)
    u = rng.uniform(idx, 0)
    r_soft = np.where(hi > lo, lo + u * (hi - lo), np.nan)
    kind, out_r, out_i = fog_response(r, cloud.intensity, alpha, r_soft, params)
    keep = kind >= 0
    return _assemble(cloud, out_r[keep], out_i[keep], idx[keep], kind[keep], trace)


def corrupt_rain(cloud: PointCloud, rain_rate: float, params: LidarWeatherParams = LidarWeatherParams(),
                 rng: RngStream = RngStream(0), trace: bool = False):
    if rain_rate < 0:
        raise ValueError("rain_rate must be non-negative")
    alpha = params.rain_alpha(rain_rate)
    if alpha == 0 or len(cloud) == 0:
        return _identity(cloud, trace)
    r = cloud.ranges
    idx = np.arange(len(cloud))
    floor = params.noise_floor
    p_hard = cloud.intensity * np.exp(-2.0 * alpha * r)
    keep = p_hard >= floor
    sigma = params.rain_range_jitter_base * (1.0 + rain_rate / 100.0)
    jittered = r + sigma * rng.normal(idx, 3)
    # a jittered return never crosses the sensor origin
    jittered = np.maximum(jittered, 0.5 * r)

    p_spur = np.minimum(1.0, params.rain_scatter_gain * (1.0 - np.exp(-alpha * r)))
    spur = (rng.uniform(idx, 1) < p_spur) & (r > 0.5)
    spur_r = 0.5 + rng.uniform(idx, 0) * (r - 0.5)
    spur_i = rng.uniform(idx, 2, floor, 2.0 * floor)

    new_r = np.concatenate([jittered[keep], spur_r[spur]])
    inten = np.concatenate([p_hard[keep], spur_i[spur]])
    source = np.concatenate([idx[keep], idx[spur]])
    kind = np.concatenate([np.full(keep.sum(), ORIGINAL), np.full(spur.sum(), SPURIOUS)])
    return _assemble(cloud, new_r, inten, source, kind, trace)


def corrupt_snow(cloud: PointCloud, snow_rate: float, params: LidarWeatherParams = LidarWeatherParams(),
                 rng: RngStream = RngStream(0), trace: bool = False):
    if snow_rate < 0:
        raise ValueError("snow_rate must be non-negative")
    alpha = params.snow_alpha(snow_rate)
    if alpha == 0 or len(cloud) == 0:
        return _identity(cloud, trace)
    r = cloud.ranges
    idx = np.arange(len(cloud))
    floor = params.noise_floor
    p_hard = cloud.intensity * np.exp(-2.0 * alpha * r)

    lo = params.snow_clutter_range[0]
    hi = np.minimum(params.snow_clutter_range[1], r)
    p_occ = np.minimum(1.0, params.snow_occlusion_gain * (1.0 - np.exp(-alpha * r)))
    occluded = (rng.uniform(idx, 1) < p_occ) & (hi > lo)
    clutter_r = lo + rng.uniform(idx, 0) * (hi - lo)
    clutter_i = rng.uniform(idx, 2, floor, 3.0 * floor)

    survive = ~occluded & (p_hard >= floor)
    kind = np.where(occluded, CLUTTER, ORIGINAL)
    new_r = np.where(occluded, clutter_r, r)
    inten = np.where(occluded, clutter_i, p_hard)
    keep = occluded | survive
    return _assemble(cloud, new_r[keep], inten[keep], idx[keep], kind[keep], trace)


def corrupt(cloud: PointCloud, weather: str, severity_value: float,
            params: LidarWeatherParams = LidarWeatherParams(), rng: RngStream = RngStream(0), trace: bool = False):
    """Dispatch on weather name; clear weather returns the input unchanged."""
    weather = getattr(weather, "value", weather)
    if weather == "fog":
        return corrupt_fog(cloud, severity_value, params, rng, trace)
    if weather == "rain":
        return corrupt_rain(cloud, severity_value, params, rng, trace)
    if weather == "snow":
        return corrupt_snow(cloud, severity_value, params, rng, trace)
    if weather == "clear":
        return _identity(cloud, trace)
    raise ValueError(f"unknown weather {weather!r}")
