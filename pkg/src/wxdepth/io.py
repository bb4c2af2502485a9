"""File codecs: 16-bit depth PNG, float32 point clouds, annotations,
calibration text files, RGB images, occluder mask libraries, teacher grids."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .core import CameraCalibration, CodecError, DepthGrid, ImageBuffer, PointCloud, SampleAnnotation
from .rgb_weather import OccluderKind, OccluderMask

DEPTH_SCALE = 256.0
UINT16_MAX = 65535

_CALIB_KEYS = {
    "P_rect": ("P_rect", "P2", "P_rect_02"),
    "R_rect": ("R_rect", "R0_rect", "R_rect_00"),
    "Tr_velo_cam": ("Tr_velo_cam", "Tr_velo_to_cam"),
}


# ---------------------------------------------------------------- depth

def encode_depth(values) -> tuple[np.ndarray, int]:
    """Depth in meters to uint16 (round(d * 256)); returns (array, clamped count)."""
    v = np.asarray(values.values if isinstance(values, DepthGrid) else values, dtype=np.float64)
    stored = np.floor(v * DEPTH_SCALE + 0.5)
    over = int((stored > UINT16_MAX).sum())
    return np.clip(stored, 0, UINT16_MAX).astype(np.uint16), over


def decode_depth(stored) -> np.ndarray:
    return np.asarray(stored, dtype=np.float64) / DEPTH_SCALE


def write_depth_png(path, depth) -> int:
    """Write a single-channel 16-bit PNG; returns the number of clamped pixels."""
    arr, over = encode_depth(depth)
    Image.fromarray(arr).save(path, format="PNG")
    return over


def read_depth_png(path, d_max: float = UINT16_MAX / DEPTH_SCALE) -> DepthGrid:
    try:
        with Image.open(path) as img:
            if img.mode not in ("I;16", "I;16B", "I", "L"):
                raise CodecError(f"{path}: expected a single-channel 16-bit PNG, got mode {img.mode}")
            arr = np.array(img)
    except (OSError, SyntaxError) as exc:
        raise CodecError(f"{path}: {exc}") from exc
    if arr.ndim != 2:
        raise CodecError(f"{path}: depth PNG must be single-channel")
    return DepthGrid(decode_depth(arr), d_max=d_max)


# ---------------------------------------------------------------- point clouds

def encode_cloud(cloud: PointCloud) -> bytes:
    return np.ascontiguousarray(cloud.points, dtype="<f4").tobytes()


def decode_cloud(data: bytes, sanitize: bool = False) -> PointCloud:
    if len(data) % 16:
        raise CodecError(f"point-cloud payload of {len(data)} bytes is not a multiple of 16")
    arr = np.frombuffer(data, dtype="<f4").reshape(-1, 4)
    if sanitize:
        return PointCloud.sanitized(arr)
    try:
        return PointCloud(arr)
    except ValueError as exc:
        raise CodecError(str(exc)) from exc


def write_cloud(path, cloud: PointCloud) -> None:
    Path(path).write_bytes(encode_cloud(cloud))


def read_cloud(path, sanitize: bool = False) -> PointCloud:
    return decode_cloud(Path(path).read_bytes(), sanitize=sanitize)


# ---------------------------------------------------------------- annotations

def encode_annotation(ann: SampleAnnotation) -> bytes:
    return (json.dumps(ann.to_dict(), indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def decode_annotation(data: bytes) -> SampleAnnotation:
    try:
        d = json.loads(data.decode("utf-8"))
        return SampleAnnotation(
            weather=d["weather"],
            severity_level=int(d["severity_level"]),
            severity_value=float(d["severity_value"]),
            unit=d["unit"],
            time_of_day=d["time_of_day"],
            lens=d["lens"],
            scene=d.get("scene", "unspecified"),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise CodecError(f"malformed annotation: {exc}") from exc


def write_annotation(path, ann: SampleAnnotation) -> None:
    Path(path).write_bytes(encode_annotation(ann))


def read_annotation(path) -> SampleAnnotation:
    return decode_annotation(Path(path).read_bytes())


# ---------------------------------------------------------------- images

def write_image(path, image: ImageBuffer) -> None:
    arr = np.floor(image.values * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_image(path) -> ImageBuffer:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, SyntaxError) as exc:
        raise CodecError(f"{path}: {exc}") from exc
    return ImageBuffer(arr)


# ---------------------------------------------------------------- calibration

def _nearest_rotation(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


def parse_calibration(text: str, image_width: int | None = None, image_height: int | None = None,
                      rect_tolerance: float = 1e-4) -> CameraCalibration:
    """Parse ``key: floats`` lines (KITTI-shaped).

    The rectifying matrix is snapped to the nearest rotation when it is within
    ``rect_tolerance`` of orthonormal (text files store ~7 digits). A nonzero
    fourth column of P_rect (stereo baseline) is folded into the extrinsic.
    """
    raw = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise CodecError(f"calibration line {ln}: missing ':'")
        try:
            raw[key.strip()] = [float(x) for x in rest.split()]
        except ValueError as exc:
            raise CodecError(f"calibration line {ln}: {exc}") from exc

    def pick(name, size):
        for alias in _CALIB_KEYS[name]:
            if alias in raw:
                vals = raw[alias]
                if len(vals) != size:
                    raise CodecError(f"{alias}: expected {size} values, got {len(vals)}")
                return np.array(vals)
        raise CodecError(f"calibration is missing {name}")

    P = pick("P_rect", 12).reshape(3, 4)
    R = pick("R_rect", 9).reshape(3, 3)
    T = pick("Tr_velo_cam", 12).reshape(3, 4)
    if np.abs(R.T @ R - np.eye(3)).max() > rect_tolerance:
        raise CodecError("R_rect is not a rotation")
    R = _nearest_rotation(R)
    K = P[:, :3]
    t_off = np.linalg.solve(K, P[:, 3])
    T = T.copy()
    T[:, 3] += R.T @ t_off
    if "image_size" in raw and image_width is None:
        image_width, image_height = (int(v) for v in raw["image_size"][:2])
    if image_width is None or image_height is None:
        raise CodecError("image size unknown: pass it or include an image_size line")
    return CameraCalibration(
        fx=float(K[0, 0]), fy=float(K[1, 1]), cx=float(K[0, 2]), cy=float(K[1, 2]),
        rect=R, extrinsic=T, image_width=int(image_width), image_height=int(image_height),
    )


def format_calibration(calib: CameraCalibration) -> str:
    def row(vals):
        return " ".join(repr(float(v)) for v in np.ravel(vals))

    P = np.zeros((3, 4))
    P[:, :3] = [[calib.fx, 0, calib.cx], [0, calib.fy, calib.cy], [0, 0, 1]]
    return (
        f"P_rect: {row(P)}\n"
        f"R_rect: {row(calib.rect)}\n"
        f"Tr_velo_cam: {row(calib.extrinsic)}\n"
        f"image_size: {calib.image_width} {calib.image_height}\n"
    )


def read_calibration(path, image_width=None, image_height=None) -> CameraCalibration:
    return parse_calibration(Path(path).read_text(), image_width, image_height)


def write_calibration(path, calib: CameraCalibration) -> None:
    Path(path).write_text(format_calibration(calib))


# ---------------------------------------------------------------- mask library

MASK_PREFIXES = {"rd_": OccluderKind.RAINDROP, "sf_": OccluderKind.SNOWFLAKE}


def load_mask_library(directory) -> dict[OccluderKind, list[OccluderMask]]:
    """8-bit grayscale masks named ``rd_*`` (raindrop) or ``sf_*`` (snowflake)."""
    lib = {k: [] for k in OccluderKind}
    for name in sorted(os.listdir(directory)):
        kind = next((k for p, k in MASK_PREFIXES.items() if name.startswith(p)), None)
        if kind is None:
            continue
        try:
            with Image.open(Path(directory) / name) as img:
                alpha = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        except (OSError, SyntaxError) as exc:
            raise CodecError(f"{name}: {exc}") from exc
        lib[kind].append(OccluderMask(alpha, kind))
    return lib


def write_mask(path, mask: OccluderMask) -> None:
    Image.fromarray(np.floor(mask.alpha_map * 255 + 0.5).astype(np.uint8), mode="L").save(path, format="PNG")


# ---------------------------------------------------------------- teacher / student grids

TEACHER_KINDS = ("disparity", "metric")


def read_grid(path) -> tuple[np.ndarray, str | None]:
    """Load a float grid. ``.npz`` files carry ``values`` and an optional
    ``kind`` header; ``.npy`` is a bare array; ``.png`` is a 16-bit depth PNG."""
    path = Path(path)
    try:
        if path.suffix == ".npz":
            with np.load(path, allow_pickle=False) as z:
                kind = str(z["kind"]) if "kind" in z.files else None
                return np.asarray(z["values"], dtype=np.float64), kind
        if path.suffix == ".npy":
            return np.asarray(np.load(path, allow_pickle=False), dtype=np.float64), None
        if path.suffix == ".png":
            return np.array(read_depth_png(path).values), "metric"
    except (OSError, ValueError, KeyError) as exc:
        raise CodecError(f"{path}: {exc}") from exc
    raise CodecError(f"{path}: unsupported grid format")


def write_teacher(path, values, kind: str) -> None:
    if kind not in TEACHER_KINDS:
        raise ValueError(f"kind must be one of {TEACHER_KINDS}")
    np.savez(path, values=np.asarray(values, dtype=np.float64), kind=np.array(kind))
