"""Empirical estimators on pooled (personality, degree) samples and their comparison to theory."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .meanfield import JointGrid
from .model import SampleSet

log = logging.getLogger(__name__)

_SQRT_2PI = np.sqrt(2.0 * np.pi)
_MIN_BANDWIDTH = 1e-3
_CHUNK = 8192


@dataclass
class DensityGrid:
    p: np.ndarray
    k: np.ndarray
    values: np.ndarray  # shape (len(p), len(k))
    bandwidth: tuple[float, float]
    p_weights: np.ndarray
    k_weights: np.ndarray
    flags: list[str] = field(default_factory=list)

    def total_mass(self) -> float:
        return float(self.p_weights @ self.values @ self.k_weights)


@dataclass
class ConditionalCurve:
    p: np.ndarray
    mean: np.ndarray
    counts: np.ndarray
    window: int
    stride: int
    tail_aligned: bool = False

    def __len__(self):
        return len(self.p)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    dx = np.diff(x)
    w = np.zeros(len(x))
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def scott_bandwidth(x: np.ndarray, n_dims: int = 2) -> float:
    """Scott's rule for a product kernel: n^(-1/(d+4)) times the sample standard deviation."""
    n = len(x)
    return float(n ** (-1.0 / (n_dims + 4)) * np.std(x, ddof=1))


def kde2d(
    samples: SampleSet,
    bandwidth: tuple[float, float] | None = None,
    p_grid=None,
    k_grid=None,
) -> DensityGrid:
    """Product-Gaussian kernel density estimate on the (personality, degree) plane."""
    p = np.asarray(samples.personality, dtype=float)
    k = np.asarray(samples.degree, dtype=float)
    n = len(p)
    if n < 2:
        raise ValueError("kernel density estimate needs at least two samples")
    p_grid = np.linspace(p.min(), p.max(), 101) if p_grid is None else np.asarray(p_grid, dtype=float)
    k_grid = np.arange(0.0, k.max() + 1.0) if k_grid is None else np.asarray(k_grid, dtype=float)
    flags = []
    if bandwidth is None:
        hp, hk = scott_bandwidth(p), scott_bandwidth(k)
        flags.append("bandwidth=scott")
    else:
        hp, hk = (float(b) for b in bandwidth)
    if not hp > 0:
        log.warning("zero-variance personality axis; using minimum bandwidth")
        hp = _MIN_BANDWIDTH
        flags.append("degenerate-personality-axis")
    if not hk > 0:
        log.warning("zero-variance degree axis; using minimum bandwidth")
        hk = _MIN_BANDWIDTH
        flags.append("degenerate-degree-axis")
    dens = np.zeros((len(p_grid), len(k_grid)))
    for s in range(0, n, _CHUNK):
        zp = (p_grid[None, :] - p[s:s + _CHUNK, None]) / hp
        zk = (k_grid[None, :] - k[s:s + _CHUNK, None]) / hk
        dens += np.exp(-0.5 * zp * zp).T @ np.exp(-0.5 * zk * zk)
    dens /= n * hp * hk * _SQRT_2PI**2
    pw = _trapezoid_weights(p_grid) if len(p_grid) > 1 else np.ones(1)
    kw = np.gradient(k_grid) if len(k_grid) > 1 else np.ones(1)
    out = DensityGrid(p_grid, k_grid, dens, (hp, hk), pw, kw, flags)
    mass = out.total_mass()
    if not 0.95 <= mass <= 1.05:
        out.flags.append(f"grid-mass={mass:.4f}")
    return out


def _sorted(samples: SampleSet):
    p = np.asarray(samples.personality, dtype=float)
    k = np.asarray(samples.degree, dtype=float)
    order = np.lexsort((k, p))
    return p[order], k[order]


def conditional_mean_running(samples: SampleSet, W: int, stride: int | None = None) -> ConditionalCurve:
    """Sliding-window mean of degree over personality-sorted samples.

    Windows hold exactly ``W`` consecutive samples and advance by ``stride``
    (default ``W // 10``); if the last stride stops short of the end, one more
    window is aligned to the final sample.
    """
    n = len(samples)
    W = int(W)
    if W < 1:
        raise ValueError("window must be positive")
    if W > n:
        raise ValueError(f"window {W} exceeds sample count {n}")
    stride = max(1, W // 10) if stride is None else int(stride)
    p, k = _sorted(samples)
    cp = np.concatenate([[0.0], np.cumsum(p)])
    ck = np.concatenate([[0.0], np.cumsum(k)])
    starts = np.arange(0, n - W + 1, stride)
    tail = starts[-1] + W < n
    if tail:
        starts = np.append(starts, n - W)
    mp = (cp[starts + W] - cp[starts]) / W
    mk = (ck[starts + W] - ck[starts]) / W
    return ConditionalCurve(mp, mk, np.full(len(starts), W), W, stride, bool(tail))


def compare_conditional(
    curve: ConditionalCurve, analytic: Callable, p_range: tuple[float, float] = (-0.8, 0.8)
) -> dict:
    """Sup-norm and mean absolute deviation of the curve from ``analytic`` inside ``p_range``."""
    if len(curve) == 0:
        raise ValueError("empty curve")
    lo, hi = p_range
    inside = (curve.p >= lo) & (curve.p <= hi)
    if not inside.any():
        raise ValueError(f"no curve points inside p range [{lo}, {hi}]")
    diff = np.abs(curve.mean[inside] - np.asarray(analytic(curve.p[inside]), dtype=float))
    return {"sup_norm": float(diff.max()), "mad": float(diff.mean()), "points": int(inside.sum()),
            "p_range": [float(lo), float(hi)]}


def _grid_of(x):
    if isinstance(x, DensityGrid):
        return x.p, x.k, x.values, x.p_weights, x.k_weights
    if isinstance(x, JointGrid):
        return x.p, x.k, x.values, x.p_weights, np.ones(len(x.k))
    raise TypeError(f"not a grid: {type(x).__name__}")


def compare_density(empirical, analytic) -> float:
    """L1 distance between two densities on the same grid."""
    p1, k1, v1, pw, kw = _grid_of(empirical)
    p2, k2, v2, _, _ = _grid_of(analytic)
    if p1.shape != p2.shape or k1.shape != k2.shape or not (np.allclose(p1, p2) and np.allclose(k1, k2)):
        raise ValueError("density grids do not match")
    return float(pw @ np.abs(v1 - v2) @ kw)


def curve_slope(curve: ConditionalCurve) -> float:
    """Least-squares slope of mean degree against personality."""
    if len(curve) < 2:
        raise ValueError("slope needs at least two curve points")
    return float(np.polyfit(curve.p, curve.mean, 1)[0])


def bootstrap_slopes(
    samples: SampleSet, W: int, n_boot: int = 200, rng: np.random.Generator | None = None, stride: int | None = None
) -> np.ndarray:
    """Slopes of running-mean curves refit on bootstrap resamples of the samples."""
    rng = np.random.default_rng(0) if rng is None else rng
    n = len(samples)
    out = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(n, size=n)
        out[b] = curve_slope(conditional_mean_running(samples.select(idx), W, stride))
    return out
