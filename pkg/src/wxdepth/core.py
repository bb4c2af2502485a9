"""Domain types shared across the toolkit.

Grids follow the KITTI depth-completion convention: a depth of exactly 0.0
marks a pixel without a measurement.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

D_MAX = 120.0
INVERSE_DEPTH_FLOOR = 1e-3


class WxDepthError(Exception):
    """Base class for toolkit errors."""


class InvalidSeverity(WxDepthError, ValueError):
    pass


class EmptyDepth(WxDepthError, ValueError):
    pass


class DimensionMismatch(WxDepthError, ValueError):
    pass


class NoMasks(WxDepthError, ValueError):
    pass


class DegenerateFit(WxDepthError, ArithmeticError):
    pass


class EmptyGroundTruth(WxDepthError, ValueError):
    pass


class CodecError(WxDepthError, ValueError):
    pass


class LayoutError(WxDepthError, FileNotFoundError):
    pass


class Weather(str, enum.Enum):
    CLEAR = "clear"
    FOG = "fog"
    RAIN = "rain"
    SNOW = "snow"


class TimeOfDay(str, enum.Enum):
    DAY = "day"
    NIGHT = "night"


class Lens(str, enum.Enum):
    NONE = "none"
    RAINDROP = "raindrop"
    SNOWFLAKE = "snowflake"


class Frame(str, enum.Enum):
    SENSOR = "sensor"
    CAMERA = "camera-rectified"


# Physical severity per level 1..3.
SEVERITY_TABLE = {
    Weather.FOG: ((0.01, 0.1, 0.2), "1/m"),
    Weather.RAIN: ((10.0, 100.0, 200.0), "mm/hr"),
    Weather.SNOW: ((0.5, 1.5, 2.5), "mm/hr"),
}

SEVERITY_WORDS = {0: "no", 1: "light", 2: "moderate", 3: "heavy"}


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N x 4 array of (x, y, z, intensity) with a frame tag."""

    points: np.ndarray
    frame: Frame = Frame.SENSOR

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 4)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if pts.size and (pts[:, 3].min() < 0.0 or pts[:, 3].max() > 1.0):
            raise ValueError("intensity must lie in [0, 1]")
        if pts.size and np.any(np.einsum("ij,ij->i", pts[:, :3], pts[:, :3]) <= 0.0):
            raise ValueError("every point needs a positive range")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "frame", Frame(self.frame))

    @classmethod
    def sanitized(cls, arr, frame=Frame.SENSOR) -> "PointCloud":
        """Build from raw sensor data, dropping non-finite and zero-range points
        and clipping intensity into [0, 1]."""
        arr = np.asarray(arr, dtype=np.float64).reshape(-1, 4)
        keep = np.all(np.isfinite(arr), axis=1)
        keep &= np.einsum("ij,ij->i", arr[:, :3], arr[:, :3]) > 0.0
        arr = arr[keep].copy()
        arr[:, 3] = np.clip(arr[:, 3], 0.0, 1.0)
        return cls(arr, frame)

    def __len__(self):
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    @property
    def ranges(self) -> np.ndarray:
        return np.sqrt(np.einsum("ij,ij->i", self.xyz, self.xyz))

    def equals(self, other: "PointCloud") -> bool:
        return (
            self.frame == other.frame
            and self.points.shape == other.points.shape
            and self.points.tobytes() == other.points.tobytes()
        )


@dataclass(frozen=True, eq=False)
class DepthGrid:
    """H x W metric depth; 0.0 marks an invalid pixel."""

    values: np.ndarray
    d_max: float = D_MAX

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2:
            raise ValueError(f"depth grid must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise ValueError("depth values must be finite and non-negative")
        if np.any(v > self.d_max):
            raise ValueError(f"depth exceeds d_max={self.d_max}")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def valid(self) -> np.ndarray:
        return self.values > 0.0


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """H x W x 3 color image with channels in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 3 or v.shape[2] != 3:
            raise ValueError(f"image must be H x W x 3, got {v.shape}")
        if not np.all(np.isfinite(v)) or v.min(initial=0.0) < 0.0 or v.max(initial=0.0) > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def equals(self, other: "ImageBuffer") -> bool:
        return self.values.shape == other.values.shape and self.values.tobytes() == other.values.tobytes()


@dataclass(frozen=True, eq=False)
class CameraCalibration:
    fx: float
    fy: float
    cx: float
    cy: float
    rect: np.ndarray = field(default_factory=lambda: np.eye(3))
    extrinsic: np.ndarray = field(default_factory=lambda: np.hstack([np.eye(3), np.zeros((3, 1))]))
    image_width: int = 1242
    image_height: int = 375

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        rect = np.array(self.rect, dtype=np.float64).reshape(3, 3)
        if np.abs(rect.T @ rect - np.eye(3)).max() > 1e-9:
            raise ValueError("rect must be orthonormal")
        ext = np.array(self.extrinsic, dtype=np.float64).reshape(3, 4)
        object.__setattr__(self, "rect", _frozen(rect))
        object.__setattr__(self, "extrinsic", _frozen(ext))


@dataclass(frozen=True)
class WeatherSpec:
    weather: Weather
    severity_level: int
    severity_value: float
    unit: str
    time_of_day: TimeOfDay = TimeOfDay.DAY
    lens: Lens = Lens.NONE
    seed: int = 0

    @property
    def is_clean(self) -> bool:
        return self.weather is Weather.CLEAR and self.lens is Lens.NONE

    def to_dict(self) -> dict:
        return {
            "weather": self.weather.value,
            "severity_level": self.severity_level,
            "severity_value": self.severity_value,
            "unit": self.unit,
            "time_of_day": self.time_of_day.value,
            "lens": self.lens.value,
            "seed": self.seed,
        }


def severity_value(weather, level: int) -> tuple[float, str]:
    """Physical severity and unit for a (weather, level) pair."""
    weather = Weather(weather)
    if weather is Weather.CLEAR:
        if level != 0:
            raise InvalidSeverity(f"clear weather only has level 0, got {level}")
        return 0.0, ""
    if level not in (1, 2, 3):
        raise InvalidSeverity(f"{weather.value} has no severity level {level}")
    values, unit = SEVERITY_TABLE[weather]
    return values[level - 1], unit


def make_weather_spec(weather, severity_level: int, time_of_day="day", lens="none", seed: int = 0) -> WeatherSpec:
    try:
        weather = Weather(weather)
    except ValueError as exc:
        raise InvalidSeverity(f"unknown weather {weather!r}") from exc
    level = int(severity_level)
    value, unit = severity_value(weather, level)
    return WeatherSpec(
        weather=weather,
        severity_level=level,
        severity_value=value,
        unit=unit,
        time_of_day=TimeOfDay(time_of_day),
        lens=Lens(lens),
        seed=int(seed) & 0xFFFFFFFFFFFFFFFF,
    )


def inverse_depth(d, floor: float = INVERSE_DEPTH_FLOOR):
    """Inverse depth in 1/km for a depth in meters, clamped below at ``floor``."""
    if floor <= 0:
        raise ValueError("floor must be positive")
    return 1000.0 / np.maximum(d, floor)


@dataclass(frozen=True)
class SampleAnnotation:
    weather: str
    severity_level: int
    severity_value: float
    unit: str
    time_of_day: str
    lens: str
    scene: str = "unspecified"

    @classmethod
    def from_spec(cls, spec: WeatherSpec, scene: str = "unspecified") -> "SampleAnnotation":
        return cls(
            weather=spec.weather.value,
            severity_level=spec.severity_level,
            severity_value=spec.severity_value,
            unit=spec.unit,
            time_of_day=spec.time_of_day.value,
            lens=spec.lens.value,
            scene=scene,
        )

    @property
    def prompt(self) -> str:
        when = "daytime" if self.time_of_day == "day" else "nighttime"
        if self.weather == "clear":
            sky = "in clear weather"
        else:
            word = SEVERITY_WORDS.get(self.severity_level, f"level-{self.severity_level}")
            sky = f"with {word} {self.weather} ({self.severity_value:g} {self.unit})"
        lens = {
            "none": "the camera lens is clean",
            "raindrop": "raindrops adhere to the camera lens",
            "snowflake": "snowflakes adhere to the camera lens",
        }.get(self.lens, f"lens condition {self.lens}")
        return f"A {when} {self.scene} driving scene {sky}; {lens}."

    def to_dict(self) -> dict:
        return {
            "weather": self.weather,
            "severity_level": self.severity_level,
            "severity_value": self.severity_value,
            "unit": self.unit,
            "time_of_day": self.time_of_day,
            "lens": self.lens,
            "scene": self.scene,
            "prompt": self.prompt,
        }
