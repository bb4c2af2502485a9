"""Deterministic synthetic driving frames: a ray-cast street scene seen by a
spinning LiDAR and a forward camera with KITTI-like geometry."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .core import CameraCalibration, DepthGrid, ImageBuffer, PointCloud
from .projection import project_cloud
from .rng import RngStream

SENSOR_HEIGHT = 1.73
MAX_RANGE = 80.0
# LiDAR (x fwd, y left, z up) -> camera (x right, y down, z fwd)
_VELO_TO_CAM = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


@dataclass(frozen=True, eq=False)
class SyntheticFrame:
    frame_id: str
    image: ImageBuffer
    cloud: PointCloud
    gt_depth: DepthGrid
    calib: CameraCalibration


def kitti_like_calibration(width: int = 1242, height: int = 375) -> CameraCalibration:
    f = 721.5377 * width / 1242.0
    ext = np.hstack([_VELO_TO_CAM, np.array([[0.0], [-0.08], [-0.27]])])
    return CameraCalibration(fx=f, fy=f, cx=width / 2.0, cy=height * 0.46, extrinsic=ext,
                             image_width=width, image_height=height)


def _boxes(rng: RngStream):
    # axis-aligned boxes (xmin, xmax, ymin, ymax, zmin, zmax) in the LiDAR frame
    n = 6
    idx = np.arange(n)
    x = rng.uniform(idx, 10, 6.0, 60.0)
    side = np.where(rng.uniform(idx, 11) < 0.5, -1.0, 1.0)
    y = side * rng.uniform(idx, 12, 2.5, 9.0)
    length = rng.uniform(idx, 13, 2.0, 6.0)
    width = rng.uniform(idx, 14, 1.5, 2.5)
    height = rng.uniform(idx, 15, 1.2, 3.5)
    boxes = np.column_stack([x, x + length, y - width / 2, y + width / 2,
                             np.full(n, -SENSOR_HEIGHT), -SENSOR_HEIGHT + height])
    walls = np.array([[-100, 100, 11.0, 12.0, -SENSOR_HEIGHT, 6.0],
                      [-100, 100, -12.0, -11.0, -SENSOR_HEIGHT, 6.0]])
    return np.vstack([boxes, walls])


def cast_rays(directions: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Distance to the first hit (ground plane or box) per unit ray; inf for no hit."""
    d = directions
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(d[:, 2] < -1e-9, -SENSOR_HEIGHT / d[:, 2], np.inf)
        best = t_ground
        for b in boxes:
            lo, hi = b[0::2], b[1::2]
            t1 = lo[None, :] / d
            t2 = hi[None, :] / d
            tmin = np.nanmax(np.minimum(t1, t2), axis=1)
            tmax = np.nanmin(np.maximum(t1, t2), axis=1)
            hit = (tmax >= tmin) & (tmax > 0) & (tmin > 0)
            best = np.where(hit & (tmin < best), tmin, best)
    return np.where(best <= MAX_RANGE, best, np.inf)


def _directions(n_beams, n_azimuth, fov_up=2.0, fov_down=-24.8):
    elev = np.deg2rad(np.linspace(fov_down, fov_up, n_beams))
    az = np.linspace(-np.pi, np.pi, n_azimuth, endpoint=False)
    e, a = np.meshgrid(elev, az, indexing="ij")
    return np.column_stack([(np.cos(e) * np.cos(a)).ravel(), (np.cos(e) * np.sin(a)).ravel(), np.sin(e).ravel()])


def make_frame(seed: int, frame_id: str = "000000", width: int = 320, height: int = 96,
               n_beams: int = 64, n_azimuth: int = 1024) -> SyntheticFrame:
    rng = RngStream.from_parts("synthetic-frame", seed, frame_id)
    boxes = _boxes(rng)
    calib = kitti_like_calibration(width, height)

    dirs = _directions(n_beams, n_azimuth)
    t = cast_rays(dirs, boxes)
    hit = np.isfinite(t)
    xyz = dirs[hit] * t[hit, None]
    idx = np.arange(len(xyz))
    inten = np.clip(0.25 + 0.5 * rng.uniform(idx, 20) * np.exp(-t[hit] / 60.0), 0.0, 1.0)
    cloud = PointCloud(np.column_stack([xyz, inten]))

    # denser sweep for semi-dense ground truth
    gdirs = _directions(4 * n_beams, 4 * n_azimuth)
    front = gdirs[:, 0] > 0.3
    gdirs = gdirs[front]
    gt_t = cast_rays(gdirs, boxes)
    gh = np.isfinite(gt_t)
    gcloud = PointCloud(np.column_stack([gdirs[gh] * gt_t[gh, None], np.full(gh.sum(), 0.5)]))
    gt = project_cloud(gcloud, calib, d_max=MAX_RANGE + 10.0)

    # image: depth-shaded scene with per-pixel texture, sky above the horizon
    v = np.arange(height)[:, None] * np.ones((1, width))
    uu = np.ones((height, 1)) * np.arange(width)[None, :]
    pix = (v * width + uu).astype(np.int64)
    tex = rng.child("texture").uniform(pix, 0)
    d = gt.values
    shade = np.where(d > 0, np.exp(-d / 40.0), 0.0)
    sky = np.stack([0.55 + 0.2 * (1 - v / height), 0.65 + 0.15 * (1 - v / height), np.full_like(v, 0.85)], -1)
    ground = np.stack([0.25 + 0.45 * shade, 0.3 + 0.35 * shade, 0.2 + 0.3 * shade], -1)
    img = np.where((d > 0)[..., None], ground, sky) + 0.08 * (tex[..., None] - 0.5)
    image = ImageBuffer(np.clip(img, 0.0, 1.0))
    return SyntheticFrame(frame_id, image, cloud, gt, calib)


def uniform_range_cloud(n: int = 100_000, r_min: float = 1.0, r_max: float = 80.0, intensity: float = 0.8,
                        seed: int = 0) -> PointCloud:
    """Points with ranges uniform in [r_min, r_max) along random directions."""
    rng = RngStream.from_parts("uniform-range-cloud", seed)
    idx = np.arange(n)
    r = rng.uniform(idx, 0, r_min, r_max)
    az = rng.uniform(idx, 1, -np.pi, np.pi)
    el = np.arcsin(rng.uniform(idx, 2, -0.4, 0.1))
    xyz = np.column_stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]) * r[:, None]
    return PointCloud(np.column_stack([xyz, np.full(n, intensity)]))


def write_kitti_tree(root, frames: list[SyntheticFrame], scenes: dict | None = None) -> None:
    """Lay out frames in the input tree layout expected by the generator."""
    root = Path(root)
    for sub in ("image", "velodyne", "groundtruth", "calib"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for f in frames:
        io.write_image(root / "image" / f"{f.frame_id}.png", f.image)
        io.write_cloud(root / "velodyne" / f"{f.frame_id}.bin", f.cloud)
        io.write_depth_png(root / "groundtruth" / f"{f.frame_id}.png", f.gt_depth)
        io.write_calibration(root / "calib" / f"{f.frame_id}.txt", f.calib)
    if scenes:
        (root / "scenes.json").write_text(json.dumps(scenes, indent=2, sort_keys=True) + "\n")
