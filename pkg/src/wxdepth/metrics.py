"""Depth-completion error metrics and LiDAR range statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import INVERSE_DEPTH_FLOOR, DepthGrid, DimensionMismatch, EmptyGroundTruth, PointCloud, inverse_depth

DEFAULT_EDGES = tuple(float(e) for e in range(0, 85, 5))
NEAR_RANGE = 20.0


@dataclass(frozen=True)
class MetricReport:
    rmse: float  # mm
    mae: float  # mm
    irmse: float  # 1/km
    imae: float  # 1/km
    valid_pixel_count: int
    pred_invalid_count: int = 0

    def to_json_dict(self) -> dict:
        return {
            "rmse_mm": self.rmse,
            "mae_mm": self.mae,
            "irmse_per_km": self.irmse,
            "imae_per_km": self.imae,
            "valid_pixels": self.valid_pixel_count,
        }


def _grid(x) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, DepthGrid) else x, dtype=np.float64)


def compute_metrics(pred, gt, floor: float = INVERSE_DEPTH_FLOOR) -> MetricReport:
    """RMSE/MAE in mm and iRMSE/iMAE in 1/km over pixels with valid ground truth.

    A missing prediction (0.0) where ground truth exists is scored as a depth
    equal to ``floor``.
    """
    p, g = _grid(pred), _grid(gt)
    if p.shape != g.shape:
        raise DimensionMismatch(f"pred {p.shape} vs gt {g.shape}")
    mask = g > 0
    n = int(mask.sum())
    if n == 0:
        raise EmptyGroundTruth("ground truth has no valid pixel")
    pv, gv = p[mask], g[mask]
    missing = ~(pv > 0)
    pv = np.where(missing, floor, pv)
    err_mm = (pv - gv) * 1000.0
    inv_err = inverse_depth(pv, floor) - inverse_depth(gv, floor)
    return MetricReport(
        rmse=float(np.sqrt(np.mean(err_mm**2))),
        mae=float(np.mean(np.abs(err_mm))),
        irmse=float(np.sqrt(np.mean(inv_err**2))),
        imae=float(np.mean(np.abs(inv_err))),
        valid_pixel_count=n,
        pred_invalid_count=int(missing.sum()),
    )


@dataclass(frozen=True, eq=False)
class RangeHistogram:
    """Range counts per bin; the last entry of ``counts`` is an overflow bin for
    ranges outside [edges[0], edges[-1])."""

    edges: np.ndarray
    counts: np.ndarray
    total: int
    mean_range: float
    near_fraction: float

    def merged(self, other: "RangeHistogram") -> "RangeHistogram":
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("histograms use different edges")
        total = self.total + other.total
        if total == 0:
            return self
        mean = (self.mean_range * self.total + other.mean_range * other.total) / total
        near = (self.near_fraction * self.total + other.near_fraction * other.total) / total
        return RangeHistogram(self.edges, self.counts + other.counts, total, mean, near)

    def to_dict(self) -> dict:
        return {
            "edges_m": [float(e) for e in self.edges],
            "counts": [int(c) for c in self.counts],
            "total": self.total,
            "mean_range_m": self.mean_range,
            "near_fraction": self.near_fraction,
        }


def range_histogram(cloud, edges=DEFAULT_EDGES, near: float = NEAR_RANGE) -> RangeHistogram:
    e = np.asarray(edges, dtype=np.float64)
    if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0):
        raise ValueError("edges must be strictly increasing with at least 2 entries")
    r = cloud.ranges if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    inside = (r >= e[0]) & (r < e[-1])
    counts = np.zeros(len(e), dtype=np.int64)
    counts[:-1] = np.histogram(r[inside], bins=e)[0]
    counts[-1] = int((~inside).sum())
    total = int(r.size)
    mean = float(r.mean()) if total else 0.0
    frac = float((r < near).mean()) if total else 0.0
    return RangeHistogram(e, counts, total, mean, frac)


@dataclass(frozen=True)
class TrendRow:
    severity: object
    mean_range: float
    near_fraction: float


@dataclass(frozen=True)
class TrendReport:
    rows: tuple
    monotone_degradation: bool

    def to_dict(self) -> dict:
        return {
            "rows": [
                {"severity": r.severity, "mean_range_m": r.mean_range, "near_fraction": r.near_fraction}
                for r in self.rows
            ],
            "monotone_degradation": self.monotone_degradation,
        }


def compare_weather_trend(hists: dict) -> TrendReport:
    """Order histograms by severity and check mean range never increases."""
    if len(hists) < 2:
        raise ValueError("need at least two severities")
    rows = tuple(TrendRow(k, hists[k].mean_range, hists[k].near_fraction) for k in sorted(hists))
    means = [r.mean_range for r in rows]
    mono = all(b <= a for a, b in zip(means, means[1:]))
    return TrendReport(rows, mono)
