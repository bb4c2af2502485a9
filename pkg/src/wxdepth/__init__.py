"""Weather corruption, projection, alignment and evaluation for RGB-LiDAR depth data."""

from .core import (
    CameraCalibration,
    DepthGrid,
    ImageBuffer,
    PointCloud,
    SampleAnnotation,
    WeatherSpec,
    inverse_depth,
    make_weather_spec,
)

__all__ = [
    "CameraCalibration",
    "DepthGrid",
    "ImageBuffer",
    "PointCloud",
    "SampleAnnotation",
    "WeatherSpec",
    "inverse_depth",
    "make_weather_spec",
]
__version__ = "0.1.0"
