import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hierosc.numerics import (
    RangeError,
    batch_means,
    checked_power,
    expdd1,
    expdd2,
    expdd3,
    relaxation_factor,
    systematic_resample,
)

mp.mp.dps = 50


def dd_reference(points, beta):
    pts = [mp.mpf(float(p)) for p in points]

    def f(x):
        return mp.e ** (-beta * x)

    def dd(xs):
        if len(xs) == 1:
            return f(xs[0])
        if abs(xs[0] - xs[-1]) < mp.mpf("1e-25"):
            n = len(xs) - 1
            return (-mp.mpf(beta)) ** n / mp.factorial(n) * f(xs[0])
        return (dd(xs[:-1]) - dd(xs[1:])) / (xs[0] - xs[-1])

    return float(dd(pts))


def test_divided_differences_match_high_precision_reference():
    rng = np.random.default_rng(0)
    worst = 0.0
    for trial in range(200):
        beta = float(rng.choice([0.5, 2.0, 10.0]))
        scale = float(rng.choice([1e-6, 0.05, 1.0, 40.0, 300.0]))
        pts = np.sort(rng.uniform(0.0, scale, size=4)) + rng.uniform(0.0, 5.0)
        if trial % 3 == 0:
            pts[1] = pts[0]
        if trial % 7 == 0:
            pts[2] = pts[1] + 1e-12
        for val, ref in (
            (float(expdd1(pts[0], pts[1], beta)), dd_reference(pts[:2], beta)),
            (float(expdd2(pts[0], pts[1], pts[2], beta)), dd_reference(pts[:3], beta)),
            (float(expdd3(*pts, beta)), dd_reference(pts, beta)),
        ):
            if ref != 0.0:
                worst = max(worst, abs(val - ref) / abs(ref))
    assert worst < 1e-12


def test_expdd2_equals_simplex_integral():
    a, b, c, beta = 0.3, 1.7, 0.9, 2.0
    quad = integrate.dblquad(
        lambda y, x: math.exp(-x * a - y * b - (beta - x - y) * c), 0, beta, 0, lambda x: beta - x
    )[0]
    assert float(expdd2(a, b, c, beta)) == pytest.approx(quad, rel=1e-9)


def test_expdd1_is_exponential_difference_quotient():
    # exact for distinct points, derivative limit at coincidence
    assert float(expdd1(1.0, 3.0, 2.0)) == pytest.approx(
        (math.exp(-2.0) - math.exp(-6.0)) / (1.0 - 3.0), rel=1e-14
    )
    assert float(expdd1(1.5, 1.5, 2.0)) == pytest.approx(-2.0 * math.exp(-3.0), rel=1e-14)


def test_expdd_handles_large_energy_spread_without_overflow():
    vals = expdd2(np.array([0.0, 1.0]), 5000.0, 9000.0, 4.0)
    assert np.all(np.isfinite(vals))
    assert np.all(vals >= 0.0)


def test_relaxation_factor():
    assert relaxation_factor(1e-12) == pytest.approx(1.0, abs=1e-9)
    assert relaxation_factor(2.0) == pytest.approx((1.0 - math.exp(-2.0)) / 2.0, rel=1e-14)
    t = np.array([0.5, 5.0])
    out = relaxation_factor(t)
    assert out.shape == (2,)
    assert np.all(np.diff(out) < 0)  # decreasing


def test_batch_means_on_iid_noise():
    rng = np.random.default_rng(1)
    series = rng.normal(3.0, 1.0, size=6400)
    mean, err = batch_means(series, 32)
    assert mean == pytest.approx(3.0, abs=5 * err)
    assert err == pytest.approx(1.0 / math.sqrt(6400), rel=0.5)
    with pytest.raises(ValueError):
        batch_means(series[:10], 32)


def test_systematic_resample_tracks_weights():
    rng = np.random.default_rng(2)
    w = np.array([0.7, 0.1, 0.1, 0.1])
    idx = systematic_resample(w, 4000, rng)
    counts = np.bincount(idx, minlength=4) / 4000
    assert np.abs(counts - w).max() < 0.02


@given(st.integers(min_value=2, max_value=7), st.integers(min_value=0, max_value=12))
def test_checked_power_matches_builtin(base, expo):
    assert checked_power(base, expo) == base**expo


def test_checked_power_range_guard():
    with pytest.raises(RangeError):
        checked_power(2, 80)
