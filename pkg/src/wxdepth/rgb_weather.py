"""Camera-side weather: homogeneous fog, in-air particles, lens occluders."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter
from scipy.spatial import cKDTree

from .core import DepthGrid, DimensionMismatch, EmptyDepth, ImageBuffer, NoMasks
from .rng import RngStream


class OccluderKind(str, enum.Enum):
    RAINDROP = "raindrop"
    SNOWFLAKE = "snowflake"


@dataclass(frozen=True)
class FogImageParams:
    airlight: tuple = (0.8, 0.8, 0.8)
    sky_depth: float = 1000.0

    def __post_init__(self):
        if any(not 0.0 <= a <= 1.0 for a in self.airlight):
            raise ValueError("airlight channels must lie in [0, 1]")
        if self.sky_depth <= 0:
            raise ValueError("sky_depth must be positive")


@dataclass(frozen=True, eq=False)
class OccluderMask:
    alpha_map: np.ndarray
    kind: OccluderKind

    def __post_init__(self):
        a = np.array(self.alpha_map, dtype=np.float64, copy=True)
        if a.ndim != 2 or a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("alpha_map must be a 2-D grid in [0, 1]")
        if not np.any(a > 0):
            raise ValueError("occluder mask has empty support")
        a.setflags(write=False)
        object.__setattr__(self, "alpha_map", a)
        object.__setattr__(self, "kind", OccluderKind(self.kind))


@dataclass(frozen=True)
class LensOcclusionParams:
    count_range: tuple = (2, 6)
    scale_range: tuple = (0.03, 0.15)
    blur_sigma_range: tuple = (2.0, 8.0)
    opacity_range: tuple = (0.4, 0.95)
    snow_tint: tuple = (0.85, 0.88, 0.95)
    boundary_bias: float = 0.7
    border_band: float = 0.2

    def __post_init__(self):
        for lo, hi in (self.count_range, self.scale_range, self.blur_sigma_range, self.opacity_range):
            if lo > hi:
                raise ValueError("ranges must be ordered (min <= max)")
        if self.count_range[0] < 0:
            raise ValueError("count_range must be non-negative")
        if not 0.0 <= self.opacity_range[0] <= self.opacity_range[1] <= 1.0:
            raise ValueError("opacity range must lie within [0, 1]")
        if not 0.0 <= self.boundary_bias <= 1.0:
            raise ValueError("boundary_bias is a probability")


# ---------------------------------------------------------------- fog

def fill_depth_holes(depth: DepthGrid, sky_depth: float = 1000.0) -> DepthGrid:
    """Densify a depth grid.

    Pixels above the topmost valid pixel of their column become ``sky_depth``.
    Other holes copy the nearest valid pixel (Euclidean pixel distance; ties go
    to the smaller row, then the smaller column).
    """
    vals = depth.values
    valid = vals > 0
    if not valid.any():
        raise EmptyDepth("depth grid has no valid pixel")
    out = vals.copy()
    h, w = vals.shape

    col_has = valid.any(axis=0)
    top = np.where(col_has, valid.argmax(axis=0), h)
    rows = np.arange(h)[:, None]
    sky = (rows < top[None, :]) & col_has[None, :]
    out[sky] = sky_depth

    holes = ~valid & ~sky
    if holes.any():
        vr, vc = np.nonzero(valid)
        tree = cKDTree(np.column_stack([vr, vc]).astype(np.float64))
        hr, hc = np.nonzero(holes)
        q = np.column_stack([hr, hc]).astype(np.float64)
        k = min(2, len(vr))
        dist, nn = tree.query(q, k=k)
        if k == 1:
            dist, nn = dist[:, None], nn[:, None]
        pick = nn[:, 0].copy()
        # squared pixel distances are integers, so ties are exact
        d2 = np.rint(dist**2)
        tied = np.nonzero(d2[:, 0] == d2[:, 1])[0] if k == 2 else np.array([], dtype=int)
        for t in tied:
            cand = np.array(tree.query_ball_point(q[t], np.sqrt(d2[t, 0]) + 1e-6))
            cd2 = (vr[cand] - hr[t]) ** 2 + (vc[cand] - hc[t]) ** 2
            cand = cand[cd2 == cd2.min()]
            pick[t] = cand[np.lexsort((vc[cand], vr[cand]))[0]]
        out[hr, hc] = vals[vr[pick], vc[pick]]
    return DepthGrid(out, d_max=max(depth.d_max, sky_depth))


def transmittance(depth_m, beta: float) -> np.ndarray:
    return np.exp(-beta * np.asarray(depth_m, dtype=np.float64))


def synthesize_fog_image(clean: ImageBuffer, depth: DepthGrid, beta: float,
                         params: FogImageParams = FogImageParams()) -> ImageBuffer:
    """Homogeneous-medium fog: clean * t + airlight * (1 - t), t = exp(-beta d)."""
    if (clean.height, clean.width) != depth.shape:
        raise DimensionMismatch(f"image {clean.values.shape[:2]} vs depth {depth.shape}")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if not np.all(depth.valid):
        raise ValueError("fog synthesis needs a fully valid depth grid")
    if beta == 0:
        return ImageBuffer(clean.values)
    t = transmittance(depth.values, beta)[..., None]
    a = np.asarray(params.airlight, dtype=np.float64)
    out = clean.values * t + a * (1.0 - t)
    return ImageBuffer(np.clip(out, 0.0, 1.0))


# ---------------------------------------------------------------- particles

@dataclass(frozen=True, eq=False)
class ParticleDraws:
    """Per-primitive parameters of an overlay, in drawing order."""

    kind: str
    x: np.ndarray
    y: np.ndarray
    size: np.ndarray  # streak length or disc radius, px
    angle: np.ndarray  # radians from vertical (streaks only)
    weight: np.ndarray  # blend weight / peak alpha


def particle_count(density_per_megapixel: float, width: int, height: int) -> int:
    return int(np.floor(density_per_megapixel * width * height / 1e6 + 0.5))


def sample_particles(kind: str, n: int, width: int, height: int, rng: RngStream) -> ParticleDraws:
    idx = np.arange(n)
    x = rng.uniform(idx, 0, 0.0, width)
    y = rng.uniform(idx, 1, 0.0, height)
    if kind == "rain_streak":
        size = rng.uniform(idx, 2, 8.0, 30.0)
        angle = np.deg2rad(rng.uniform(idx, 3, -15.0, 15.0))
        weight = rng.uniform(idx, 4, 0.15, 0.4)
    elif kind == "snowflake":
        size = rng.uniform(idx, 2, 1.0, 4.0)
        angle = np.zeros(n)
        weight = rng.uniform(idx, 4, 0.3, 0.8)
    else:
        raise ValueError(f"unknown particle kind {kind!r}")
    return ParticleDraws(kind, x, y, size, angle, weight)


def _disc_alpha(cx, cy, radius, peak, x0, x1, y0, y1):
    yy, xx = np.mgrid[y0:y1, x0:x1]
    d2 = (xx + 0.5 - cx) ** 2 + (yy + 0.5 - cy) ** 2
    return peak * np.clip(1.0 - d2 / radius**2, 0.0, None)


def _streak_coverage(cx, cy, length, angle, x0, x1, y0, y1):
    # unit-width anti-aliased segment centred at (cx, cy)
    dx, dy = np.sin(angle), np.cos(angle)
    half = 0.5 * length
    yy, xx = np.mgrid[y0:y1, x0:x1]
    px, py = xx + 0.5 - cx, yy + 0.5 - cy
    along = np.clip(px * dx + py * dy, -half, half)
    ex, ey = px - along * dx, py - along * dy
    return np.clip(1.0 - np.sqrt(ex * ex + ey * ey), 0.0, None)


def particle_footprint(draws: ParticleDraws, i: int, width: int, height: int):
    """Pixel box (x0, x1, y0, y1) and per-pixel alpha of primitive ``i``."""
    cx, cy, s = draws.x[i], draws.y[i], draws.size[i]
    reach = s + 1.0 if draws.kind == "snowflake" else 0.5 * s + 1.5
    x0, x1 = max(int(np.floor(cx - reach)), 0), min(int(np.ceil(cx + reach)) + 1, width)
    y0, y1 = max(int(np.floor(cy - reach)), 0), min(int(np.ceil(cy + reach)) + 1, height)
    if draws.kind == "snowflake":
        a = _disc_alpha(cx, cy, s, draws.weight[i], x0, x1, y0, y1)
    else:
        a = draws.weight[i] * _streak_coverage(cx, cy, s, draws.angle[i], x0, x1, y0, y1)
    return (x0, x1, y0, y1), a


def overlay_particles(image: ImageBuffer, kind: str, density_per_megapixel: float,
                      rng: RngStream = RngStream(0)) -> ImageBuffer:
    """Parametric rain streaks (additive) or soft snow discs (alpha over white)."""
    if density_per_megapixel < 0:
        raise ValueError("density must be non-negative")
    h, w = image.height, image.width
    n = particle_count(density_per_megapixel, w, h)
    if n == 0:
        return ImageBuffer(image.values)
    draws = sample_particles(kind, n, w, h, rng)
    out = image.values.copy()
    for i in range(n):
        (x0, x1, y0, y1), a = particle_footprint(draws, i, w, h)
        if a.size == 0:
            continue
        patch = out[y0:y1, x0:x1]
        if kind == "snowflake":
            patch[:] = patch * (1.0 - a[..., None]) + a[..., None]
        else:
            patch[:] = patch + a[..., None]
    return ImageBuffer(np.clip(out, 0.0, 1.0))


# ---------------------------------------------------------------- lens occluders

def procedural_masks(kind, count: int = 3, size: int = 64, seed: int = 0) -> list[OccluderMask]:
    """Small built-in library of soft droplet or snow-clump silhouettes."""
    kind = OccluderKind(kind)
    rng = RngStream.from_parts("procedural-masks", kind.value, seed)
    yy, xx = (np.mgrid[0:size, 0:size] + 0.5) / size - 0.5
    ang = np.arctan2(yy, xx)
    rad = np.hypot(xx, yy)
    masks = []
    for k in range(count):
        if kind is OccluderKind.RAINDROP:
            # slightly elongated drop with soft rim
            sx = rng.scalar(0, k, 0.75, 1.0)
            r_edge = 0.45 * np.hypot(np.cos(ang) / sx, np.sin(ang)) ** -1
            a = np.clip((r_edge - rad) / (0.25 * r_edge), 0.0, 1.0)
        else:
            # irregular lobed clump
            ph = rng.uniform(np.arange(4) + 10 * k, 1, 0.0, 2 * np.pi)
            amp = rng.uniform(np.arange(4) + 10 * k, 2, 0.02, 0.08)
            r_edge = 0.36 + sum(amp[j] * np.cos((j + 2) * ang + ph[j]) for j in range(4))
            a = np.clip((r_edge - rad) / 0.08, 0.0, 1.0) * 0.95
        masks.append(OccluderMask(a, kind))
    return masks


def _resize_alpha(alpha: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    img = Image.fromarray(alpha.astype(np.float32), mode="F")
    return np.clip(np.asarray(img.resize((new_w, new_h), Image.BILINEAR), dtype=np.float64), 0.0, 1.0)


@dataclass(frozen=True)
class OccluderDraw:
    mask_index: int
    x0: int
    y0: int
    width: int
    height: int
    sigma: float
    opacity: float


def sample_occluders(masks, width: int, height: int, params: LensOcclusionParams, rng: RngStream) -> list[OccluderDraw]:
    lo, hi = params.count_range
    count = int(rng.integers(np.array([0]), 0, int(lo), int(hi))[0])
    if count == 0:
        return []
    if not masks:
        raise NoMasks("lens occlusion requested but the mask library is empty")
    draws = []
    idx = np.arange(1, count + 1)
    choice = rng.integers(idx, 1, 0, len(masks) - 1)
    scale = rng.uniform(idx, 2, *params.scale_range)
    sigma = rng.uniform(idx, 3, *params.blur_sigma_range)
    opacity = rng.uniform(idx, 4, *params.opacity_range)
    u, v = rng.uniform(idx, 5), rng.uniform(idx, 6)
    edge_pick = rng.uniform(idx, 7)
    side = rng.integers(idx, 8, 0, 3)
    for j in range(count):
        m = masks[int(choice[j])]
        mh, mw = m.alpha_map.shape
        ow = max(int(round(scale[j] * width)), 1)
        oh = max(int(round(ow * mh / mw)), 1)
        cx, cy = u[j] * width, v[j] * height
        if m.kind is OccluderKind.SNOWFLAKE and edge_pick[j] < params.boundary_bias:
            # centre falls inside a band along one image border
            bw, bh = params.border_band * width, params.border_band * height
            s = int(side[j])
            if s == 0:
                cy = v[j] * bh
            elif s == 1:
                cy = height - v[j] * bh
            elif s == 2:
                cx = u[j] * bw
            else:
                cx = width - u[j] * bw
        draws.append(OccluderDraw(int(choice[j]), int(np.floor(cx - ow / 2)), int(np.floor(cy - oh / 2)),
                                  ow, oh, float(sigma[j]), float(opacity[j])))
    return draws


def composite_lens_occlusion(image: ImageBuffer, masks, params: LensOcclusionParams = LensOcclusionParams(),
                             rng: RngStream = RngStream(0), draws: list[OccluderDraw] | None = None) -> ImageBuffer:
    """Layer defocused, tinted occluders onto the image in sampling order.

    Per occluder: out = (1 - o m) current + o m (tint * blurred current).
    """
    masks = list(masks)
    h, w = image.height, image.width
    if draws is None:
        draws = sample_occluders(masks, w, h, params, rng)
    if not draws:
        return ImageBuffer(image.values)
    out = image.values.copy()
    for d in draws:
        mask = masks[d.mask_index]
        m = _resize_alpha(mask.alpha_map, d.width, d.height)
        x0, y0 = max(d.x0, 0), max(d.y0, 0)
        x1, y1 = min(d.x0 + d.width, w), min(d.y0 + d.height, h)
        if x0 >= x1 or y0 >= y1:
            continue
        m = m[y0 - d.y0:y1 - d.y0, x0 - d.x0:x1 - d.x0]
        pad = int(np.ceil(3.0 * d.sigma))
        px0, py0 = max(x0 - pad, 0), max(y0 - pad, 0)
        px1, py1 = min(x1 + pad, w), min(y1 + pad, h)
        region = out[py0:py1, px0:px1]
        blurred = gaussian_filter(region, sigma=(d.sigma, d.sigma, 0), mode="nearest")
        b = blurred[y0 - py0:y1 - py0, x0 - px0:x1 - px0]
        tint = np.asarray(params.snow_tint if mask.kind is OccluderKind.SNOWFLAKE else (1.0, 1.0, 1.0))
        wgt = (d.opacity * m)[..., None]
        cur = out[y0:y1, x0:x1]
        out[y0:y1, x0:x1] = (1.0 - wgt) * cur + wgt * (tint * b)
    return ImageBuffer(np.clip(out, 0.0, 1.0))
