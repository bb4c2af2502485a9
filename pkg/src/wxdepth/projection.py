"""LiDAR-to-image projection with a nearest-depth z-buffer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CameraCalibration, DepthGrid, Frame, PointCloud

Z_MIN = 0.1


@dataclass(frozen=True, eq=False)
class PixelSamples:
    """Parallel arrays of projected samples (u, v, depth, source_index)."""

    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray
    source_index: np.ndarray

    def __len__(self):
        return len(self.u)

    def permuted(self, order) -> "PixelSamples":
        return PixelSamples(self.u[order], self.v[order], self.depth[order], self.source_index[order])


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def to_camera_frame(cloud: PointCloud, calib: CameraCalibration, z_min: float = Z_MIN, return_index: bool = False):
    """p_cam = rect @ (extrinsic @ [x, y, z, 1]); drops points with z_cam <= z_min."""
    if cloud.frame is not Frame.SENSOR:
        raise ValueError("to_camera_frame expects a sensor-frame cloud")
    xyz = cloud.xyz
    cam = (xyz @ calib.extrinsic[:, :3].T + calib.extrinsic[:, 3]) @ calib.rect.T
    keep = np.nonzero(cam[:, 2] > z_min)[0]
    out = PointCloud(np.column_stack([cam[keep], cloud.intensity[keep]]), Frame.CAMERA)
    if return_index:
        return out, keep
    return out


def project_points(cam_cloud: PointCloud, calib: CameraCalibration, source_index=None) -> PixelSamples:
    if cam_cloud.frame is not Frame.CAMERA:
        raise ValueError("project_points expects a camera-frame cloud")
    x, y, z = cam_cloud.xyz.T
    if np.any(z <= 0):
        raise ValueError("camera-frame points must have z > 0")
    if source_index is None:
        source_index = np.arange(len(cam_cloud))
    source_index = np.asarray(source_index, dtype=np.int64)
    u = round_half_away(calib.fx * x / z + calib.cx)
    v = round_half_away(calib.fy * y / z + calib.cy)
    inside = (u >= 0) & (u < calib.image_width) & (v >= 0) & (v < calib.image_height)
    return PixelSamples(u[inside], v[inside], z[inside].copy(), source_index[inside])


def rasterize(samples: PixelSamples, width: int, height: int, d_max: float = float("inf"),
              return_winners: bool = False):
    """Per-pixel minimum depth; exact depth ties go to the smaller source index."""
    grid = np.zeros((height, width))
    winners = np.full((height, width), -1, dtype=np.int64)
    if len(samples):
        if np.any((samples.u < 0) | (samples.u >= width) | (samples.v < 0) | (samples.v >= height)):
            raise ValueError("samples must lie inside the image")
        pix = samples.v * width + samples.u
        order = np.lexsort((samples.source_index, samples.depth, pix))
        pix_sorted = pix[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = pix_sorted[1:] != pix_sorted[:-1]
        best = order[first]
        grid.flat[pix[best]] = samples.depth[best]
        winners.flat[pix[best]] = samples.source_index[best]
    if np.isfinite(d_max):
        grid = np.minimum(grid, d_max)
        out = DepthGrid(grid, d_max=d_max)
    else:
        out = DepthGrid(grid, d_max=max(float(grid.max(initial=0.0)), 1.0))
    if return_winners:
        return out, winners
    return out


def project_cloud(cloud: PointCloud, calib: CameraCalibration, z_min: float = Z_MIN,
                  d_max: float = float("inf")) -> DepthGrid:
    """Full sensor-cloud to sparse-depth projection."""
    cam, keep = to_camera_frame(cloud, calib, z_min, return_index=True)
    samples = project_points(cam, calib, source_index=keep)
    return rasterize(samples, calib.image_width, calib.image_height, d_max=d_max)


def backproject_pixel(u, v, depth, calib: CameraCalibration) -> np.ndarray:
    """Sensor-frame point that projects to pixel (u, v) at camera depth ``depth``."""
    cam = np.array([(u - calib.cx) * depth / calib.fx, (v - calib.cy) * depth / calib.fy, depth])
    r, t = calib.extrinsic[:, :3], calib.extrinsic[:, 3]
    # inverse of rect @ (R x + t)
    return r.T @ (calib.rect.T @ cam - t)
