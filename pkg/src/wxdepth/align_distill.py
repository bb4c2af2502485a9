"""Teacher-prior normalization and scale/shift-invariant distillation terms.

Forward evaluators only. Grids are plain 2-D arrays; in-band 0.0 marks an
invalid pixel wherever a validity convention applies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import D_MAX, DegenerateFit, DepthGrid, DimensionMismatch

VAR_EPS = 1e-12
DENOM_FLOOR = 1e-4  # 1/m
DISPARITY_DEPTH_FLOOR = 1e-3  # m


@dataclass(frozen=True)
class AffineFit:
    a: float
    b: float
    count: int

    def apply(self, x):
        return self.a * np.asarray(x, dtype=np.float64) + self.b


def _values(grid) -> np.ndarray:
    return np.asarray(grid.values if isinstance(grid, DepthGrid) else grid, dtype=np.float64)


def _valid(x: np.ndarray) -> np.ndarray:
    return np.isfinite(x) & (x != 0.0)


def fit_affine(pred, target, mask, weights=None) -> AffineFit:
    """Least-squares (a, b) with target ~ a * pred + b over masked pixels.

    ``weights`` (optional, >= 0) turns this into weighted least squares;
    pixels with zero weight do not count toward the minimum of two.
    """
    p = _values(pred)
    t = _values(target)
    m = np.asarray(mask, dtype=bool)
    if p.shape != t.shape or p.shape != m.shape:
        raise DimensionMismatch(f"shapes differ: {p.shape}, {t.shape}, {m.shape}")
    w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != p.shape:
        raise DimensionMismatch("weights shape differs")
    sel = m & (w > 0)
    n = int(sel.sum())
    if n < 2:
        raise DegenerateFit(f"need at least 2 masked pixels, got {n}")
    ps, ts, ws = p[sel], t[sel], w[sel]
    wsum = ws.sum()
    pm = np.dot(ws, ps) / wsum
    tm = np.dot(ws, ts) / wsum
    dp = ps - pm
    var = np.dot(ws, dp * dp) / wsum
    if var < VAR_EPS:
        raise DegenerateFit(f"prediction variance {var:.3g} too small")
    cov = np.dot(ws, dp * (ts - tm)) / wsum
    a = cov / var
    return AffineFit(float(a), float(tm - a * pm), n)


def teacher_prior_from_disparity(P, D_c, mask=None, d_max: float = D_MAX) -> DepthGrid:
    """Fit 1/D_c ~ a P + b on valid pixels, then D_t = 1 / (a P + b)."""
    p = _values(P)
    d = _values(D_c)
    m = d > 0 if mask is None else np.asarray(mask, dtype=bool) & (d > 0)
    inv = np.where(d > 0, 1.0 / np.maximum(d, DISPARITY_DEPTH_FLOOR), 0.0)
    fit = fit_affine(p, inv, m)
    denom = np.maximum(fit.apply(p), DENOM_FLOOR)
    return DepthGrid(np.minimum(1.0 / denom, d_max), d_max=d_max)


def teacher_prior_from_metric(P, D_c, mask=None, d_max: float = D_MAX) -> DepthGrid:
    """Fit D_c ~ a P + b on valid pixels; D_t = a P + b, non-positive -> invalid."""
    p = _values(P)
    d = _values(D_c)
    m = d > 0 if mask is None else np.asarray(mask, dtype=bool) & (d > 0)
    fit = fit_affine(p, d, m)
    out = fit.apply(p)
    out = np.where(out > 0, np.minimum(out, d_max), 0.0)
    return DepthGrid(out, d_max=d_max)


def pool_mean(values, valid, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean of valid pixels over 2^level blocks (edge blocks may be partial).

    Returns (pooled values, block has any valid pixel).
    """
    x = np.asarray(values, dtype=np.float64)
    ok = np.asarray(valid, dtype=bool)
    if level == 0:
        return np.where(ok, x, 0.0), ok.copy()
    k = 2**level
    h, w = x.shape
    H, W = -(-h // k), -(-w // k)
    xs = np.zeros((H * k, W * k))
    ns = np.zeros((H * k, W * k))
    xs[:h, :w] = np.where(ok, x, 0.0)
    ns[:h, :w] = ok
    s = xs.reshape(H, k, W, k).sum(axis=(1, 3))
    n = ns.reshape(H, k, W, k).sum(axis=(1, 3))
    has = n > 0
    return np.where(has, s / np.where(has, n, 1.0), 0.0), has


def downsample_level(grid, level: int) -> np.ndarray:
    """Average-pool valid (nonzero) pixels in 2^level blocks; empty blocks -> 0."""
    if level < 0:
        raise ValueError("level must be >= 0")
    x = _values(grid)
    if level == 0:
        return x.copy()
    out, _ = pool_mean(x, _valid(x), level)
    return out


def downsample_weights(mask, level: int) -> np.ndarray:
    """Fraction of valid pixels per 2^level block."""
    m = np.asarray(mask, dtype=np.float64)
    out, _ = pool_mean(m, np.ones(m.shape, dtype=bool), level)
    return out


@dataclass(frozen=True, eq=False)
class PyramidLevels:
    students: list
    weights: list
    deltas: tuple

    def __post_init__(self):
        s = [np.asarray(x, dtype=np.float64) for x in self.students]
        w = [np.asarray(x, dtype=np.float64) for x in self.weights]
        if len(s) != len(w) or len(s) != len(self.deltas):
            raise ValueError("students, weights and deltas need equal length")
        for l, (a, b) in enumerate(zip(s, w)):
            if a.shape != b.shape:
                raise DimensionMismatch(f"level {l}: student {a.shape} vs weights {b.shape}")
            if l:
                prev = s[l - 1].shape
                if a.shape != (-(-prev[0] // 2), -(-prev[1] // 2)):
                    raise DimensionMismatch(f"level {l} is not a ceil-halving of level {l - 1}")
        if any(d < 0 for d in self.deltas):
            raise ValueError("level weights must be non-negative")
        object.__setattr__(self, "students", s)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))

    def __len__(self):
        return len(self.students)

    @classmethod
    def build(cls, student, num_levels: int = 4, valid_mask=None, deltas=None) -> "PyramidLevels":
        """Pyramid from a full-resolution student; weights from ``valid_mask``
        (e.g. ground-truth validity) or all ones; deltas default to 2^-l."""
        s0 = np.asarray(student, dtype=np.float64)
        m = np.ones(s0.shape) if valid_mask is None else np.asarray(valid_mask, dtype=np.float64)
        students = [s0] + [pool_mean(s0, np.ones(s0.shape, bool), l)[0] for l in range(1, num_levels)]
        weights = [downsample_weights(m, l) for l in range(num_levels)]
        if deltas is None:
            deltas = tuple(2.0**-l for l in range(num_levels))
        return cls(students, weights, deltas)


def align_level(teacher_l, student_l, W_l, teacher_valid=None):
    """Weighted LS fit student ~ alpha * teacher + beta; returns (aligned teacher, fit)."""
    t = _values(teacher_l)
    s = _values(student_l)
    w = np.asarray(W_l, dtype=np.float64)
    if not (t.shape == s.shape == w.shape):
        raise DimensionMismatch(f"shapes differ: {t.shape}, {s.shape}, {w.shape}")
    ok = np.ones(t.shape, bool) if teacher_valid is None else np.asarray(teacher_valid, bool)
    fit = fit_affine(t, s, ok & np.isfinite(s), weights=w)
    return fit.apply(t), fit


def masked_l1(residual, weights) -> float:
    r = np.asarray(residual, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    ws = w.sum()
    if ws <= 0:
        return 0.0
    return float(np.sum(w * np.abs(np.where(w > 0, r, 0.0))) / ws)


def residual_gradient(residual, weights) -> float:
    """Mean |forward difference| along x plus the same along y, using only
    neighbour pairs where both pixels carry positive weight."""
    r = np.asarray(residual, dtype=np.float64)
    ok = np.asarray(weights, dtype=np.float64) > 0
    total = 0.0
    for axis in (1, 0):
        if r.shape[axis] < 2:
            continue
        lo = [slice(None)] * 2
        hi = [slice(None)] * 2
        lo[axis], hi[axis] = slice(None, -1), slice(1, None)
        pair = ok[tuple(lo)] & ok[tuple(hi)]
        if pair.any():
            total += float(np.abs(r[tuple(hi)] - r[tuple(lo)])[pair].mean())
    return total


@dataclass
class LevelResult:
    level: int
    fit: AffineFit | None
    ssi: float = 0.0
    grad: float = 0.0
    degenerate: bool = False
    reason: str = ""


@dataclass
class DistillReport:
    levels: list = field(default_factory=list)
    ssi: float = 0.0
    grad: float = 0.0

    @property
    def degenerate_levels(self) -> list[int]:
        return [r.level for r in self.levels if r.degenerate]


def distill_terms(levels: PyramidLevels, teacher, teacher_mask=None) -> DistillReport:
    """Evaluate both distillation terms level by level.

    A level whose fit is degenerate contributes zero and is flagged.
    """
    t0 = _values(teacher)
    if t0.shape != levels.students[0].shape:
        raise DimensionMismatch(f"teacher {t0.shape} vs level-0 student {levels.students[0].shape}")
    valid0 = _valid(t0) if teacher_mask is None else np.asarray(teacher_mask, bool)
    report = DistillReport()
    for l, (s, w, delta) in enumerate(zip(levels.students, levels.weights, levels.deltas)):
        t_l, t_ok = pool_mean(t0, valid0, l)
        w_eff = np.where(t_ok, w, 0.0)
        try:
            aligned, fit = align_level(t_l, s, w_eff, t_ok)
        except DegenerateFit as exc:
            report.levels.append(LevelResult(l, None, degenerate=True, reason=str(exc)))
            continue
        resid = s - aligned
        res = LevelResult(l, fit, delta * masked_l1(resid, w_eff), delta * residual_gradient(resid, w_eff))
        report.levels.append(res)
        report.ssi += res.ssi
        report.grad += res.grad
    return report


def ssi_loss(levels: PyramidLevels, teacher, teacher_mask=None) -> float:
    return distill_terms(levels, teacher, teacher_mask).ssi


def residual_gradient_loss(levels: PyramidLevels, teacher, teacher_mask=None) -> float:
    return distill_terms(levels, teacher, teacher_mask).grad


def total_loss(l_sup: float, l_ssi: float, l_grad: float, lambda_d: float = 1.0, lambda_g: float = 0.5) -> float:
    if lambda_d < 0 or lambda_g < 0:
        raise ValueError("loss weights must be non-negative")
    return l_sup + lambda_d * l_ssi + lambda_g * l_grad
