"""Shared numerical kernels.

The workhorses here are divided differences of t -> exp(-beta*t).  Every
imaginary-time integral of a finite-temperature spectral correlator reduces
to one of these: the ordered-time (simplex) integral of
exp(-x1*E1 - ... - xm*Em) over {x_i >= 0, sum x_i = beta} equals
(-1)^(m-1) times the (m-1)-st divided difference of exp(-beta*t) at the
energies, so getting them stable at coincident and near-coincident energies
makes all correlator integrals exact up to rounding (no quadrature).

Evaluation strategy: shift energies so the minimum is 0 (exact, factors out
exp(-beta*min)), then branch on the total spread.  Clustered points use the
Taylor series in centered symmetric polynomials; separated points use the
sorted recursion dividing by the full spread, where the two sub-differences
always differ in magnitude enough that cancellation stays mild.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "expdd1",
    "expdd2",
    "expdd3",
    "relaxation_factor",
    "batch_means",
    "systematic_resample",
    "checked_power",
    "RangeError",
]


class RangeError(ValueError):
    """Integer/size arithmetic left the supported desk-scale range."""


_SERIES_TERMS = 18
_SPREAD_SWITCH = 0.5  # beta*(max-min) below which the Taylor branch is used


def _taylor_dd(pts: np.ndarray, beta: float, order: int) -> np.ndarray:
    # DD_m of exp(-beta t) = e^{-beta c} sum_j (-beta)^{m+j} h_j(s) / (m+j)!
    # with h_j the complete homogeneous symmetric polynomials of the
    # centered points s = pts - mean (Newton recursion via power sums).
    c = pts.mean(axis=-1)
    s = pts - c[..., None]
    acc = np.full(c.shape, (-beta) ** order / math.factorial(order))
    h = [np.ones(c.shape)]
    power_sums = [None] + [np.sum(s**i, axis=-1) for i in range(1, _SERIES_TERMS + 1)]
    for k in range(1, _SERIES_TERMS + 1):
        hk = np.zeros(c.shape)
        for i in range(1, k + 1):
            hk += h[k - i] * power_sums[i]
        hk /= k
        h.append(hk)
        acc += (-beta) ** (order + k) / math.factorial(order + k) * hk
    return np.exp(-beta * c) * acc


def _dd1_shifted(a: np.ndarray, b: np.ndarray, beta: float) -> np.ndarray:
    # inputs >= 0 so the direct exponentials cannot overflow
    d = a - b
    x = beta * np.abs(d)
    small = x < 1e-3
    safe_d = np.where(small, 1.0, d)
    direct = (np.exp(-beta * a) - np.exp(-beta * b)) / safe_d
    mid = 0.5 * (a + b)
    series = -beta * np.exp(-beta * mid) * (1.0 + (beta * d) ** 2 / 24.0 + (beta * d) ** 4 / 1920.0)
    return np.where(small, series, direct)


def _dd2_shifted(pts: np.ndarray, beta: float) -> np.ndarray:
    pts = np.sort(pts, axis=-1)
    spread = beta * (pts[..., -1] - pts[..., 0])
    out = np.empty(spread.shape)
    small = spread < _SPREAD_SWITCH
    if np.any(small):
        out[small] = _taylor_dd(pts[small], beta, 2)
    big = ~small
    if np.any(big):
        x0, x1, x2 = pts[big, 0], pts[big, 1], pts[big, 2]
        out[big] = (_dd1_shifted(x0, x1, beta) - _dd1_shifted(x1, x2, beta)) / (x0 - x2)
    return out


def _dd3_shifted(pts: np.ndarray, beta: float) -> np.ndarray:
    pts = np.sort(pts, axis=-1)
    spread = beta * (pts[..., -1] - pts[..., 0])
    out = np.empty(spread.shape)
    small = spread < _SPREAD_SWITCH
    if np.any(small):
        out[small] = _taylor_dd(pts[small], beta, 3)
    big = ~small
    if np.any(big):
        sub = pts[big]
        out[big] = (_dd2_shifted(sub[..., :3], beta) - _dd2_shifted(sub[..., 1:], beta)) / (
            sub[..., 0] - sub[..., 3]
        )
    return out


def _shift_min(pts: np.ndarray, beta: float):
    m = pts.min(axis=-1)
    return pts - m[..., None], np.exp(-beta * m)


def expdd1(a, b, beta: float) -> np.ndarray:
    """First divided difference of exp(-beta*t) at (a, b), broadcasting."""
    pts = np.stack(np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float)), axis=-1)
    shifted, factor = _shift_min(pts, beta)
    return factor * _dd1_shifted(shifted[..., 0], shifted[..., 1], beta)


def expdd2(a, b, c, beta: float) -> np.ndarray:
    """Second divided difference of exp(-beta*t) at (a, b, c), broadcasting.

    Equals the integral of exp(-x*a - y*b - z*c) over the simplex
    {x, y, z >= 0, x + y + z = beta} (symmetric, positive).
    """
    arrs = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(c, float))
    pts = np.stack(arrs, axis=-1)
    shifted, factor = _shift_min(pts, beta)
    return factor * _dd2_shifted(shifted, beta)


def expdd3(a, b, c, d, beta: float) -> np.ndarray:
    """Third divided difference of exp(-beta*t) at four points, broadcasting."""
    arrs = np.broadcast_arrays(
        np.asarray(a, float), np.asarray(b, float), np.asarray(c, float), np.asarray(d, float)
    )
    pts = np.stack(arrs, axis=-1)
    shifted, factor = _shift_min(pts, beta)
    return factor * _dd3_shifted(shifted, beta)


def relaxation_factor(t):
    """f(t) = (1 - exp(-t))/t, continuous through t = 0."""
    t = np.asarray(t, float)
    small = np.abs(t) < 1e-7
    safe = np.where(small, 1.0, t)
    out = np.where(small, 1.0 - t / 2.0 + t * t / 6.0, -np.expm1(-safe) / safe)
    return out if out.shape else float(out)


def batch_means(series: np.ndarray, n_batches: int = 32):
    """Mean and standard error of a correlated series via batch means.

    The series is cut into ``n_batches`` equal blocks (tail discarded); the
    stderr is the scatter of block means, which absorbs autocorrelation as
    long as blocks are much longer than the correlation time.
    """
    series = np.asarray(series, float)
    if n_batches < 2 or len(series) < 2 * n_batches:
        raise ValueError("series too short for the requested number of batches")
    usable = len(series) // n_batches * n_batches
    blocks = series[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(blocks.mean()), float(blocks.std(ddof=1) / math.sqrt(n_batches))


def integrated_autocorrelation(series: np.ndarray, window: int = 200) -> float:
    """Windowed estimate of the integrated autocorrelation time."""
    x = np.asarray(series, float)
    x = x - x.mean()
    var = np.dot(x, x) / len(x)
    if var == 0.0:
        return 1.0
    tau = 1.0
    for lag in range(1, min(window, len(x) // 4)):
        rho = np.dot(x[:-lag], x[lag:]) / ((len(x) - lag) * var)
        if rho < 0.0:
            break
        tau += 2.0 * rho
    return float(tau)


def systematic_resample(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: n indices with a single uniform offset."""
    w = np.asarray(weights, float)
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(w) / w.sum(), positions)


def checked_power(base: int, exponent: int, limit: int = 1 << 62) -> int:
    """base**exponent with an explicit range guard (sites are 64-bit)."""
    if exponent < 0:
        raise RangeError("negative exponent")
    result = 1
    for _ in range(exponent):
        result *= base
        if result > limit:
            raise RangeError(f"{base}**{exponent} exceeds the supported site range")
    return result
