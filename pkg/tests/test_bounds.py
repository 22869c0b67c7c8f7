import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hierosc.bounds import (
    BracketNotFound,
    Kernels,
    decay_envelope_constant,
    epsilon_window,
    find_beta_brackets,
    kernel_functions,
    predicted_limit,
    propagate_and_classify,
    recurrence_step,
    select_parameters,
    window_identity_residual,
)

KERN = Kernels(2, 0.25)
WIN = epsilon_window(2, 0.25, 0.05)


def test_kernel_values():
    sigma, phi, psi = kernel_functions(1.0, 2, 0.25)
    assert sigma == pytest.approx(1.0, rel=1e-15)
    assert phi == pytest.approx(2.0 ** (2 * 0.25 - 1.0), rel=1e-14)
    assert phi < 1.0
    assert kernel_functions(1e-14, 2, 0.25)[0] == pytest.approx(2.0 ** (-0.25), rel=1e-10)
    with pytest.raises(ValueError):
        kernel_functions(KERN.domain_max + 0.01, 2, 0.25)


@given(st.integers(min_value=2, max_value=5), st.floats(min_value=0.05, max_value=0.45))
def test_sigma_fixed_point_property(kappa, delta):
    k = Kernels(kappa, delta)
    assert k.sigma(1.0) == pytest.approx(1.0, rel=1e-12)


def test_window_frozen_values():
    # recomputed at 40 digits from the defining formulas
    assert WIN.v_bar == pytest.approx(1.1800337744944981, rel=1e-13)
    assert WIN.w_bar == pytest.approx(0.6667268073392909, rel=1e-13)
    assert KERN.sigma(WIN.v_bar) == pytest.approx(2.0**0.05, abs=1e-12)
    assert abs(window_identity_residual(WIN)) < 1e-12
    assert WIN.w_max == pytest.approx(1.783, abs=2e-3)  # supremum at the open right edge
    assert WIN.w_max > WIN.w_bar


def test_window_epsilon_limits():
    near_zero = epsilon_window(2, 0.25, 1e-7)
    assert near_zero.v_bar == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ValueError):
        epsilon_window(2, 0.25, 0.13)
    with pytest.raises(ValueError):
        epsilon_window(2, 0.25, 0.0)


def test_phi_cap_on_window():
    cap = 2.0 ** (2 * 0.25 + 4 * 0.05 - 1.0)
    assert cap < 1.0
    for v in np.linspace(1.0, WIN.v_bar, 200):
        assert KERN.phi(float(v)) <= cap * (1.0 + 1e-12)


def test_recurrence_pure_map_and_fixed_point():
    lo, hi, x, ok = recurrence_step(0.7, 0.7, 0.0, KERN)
    assert ok and x == 0.0
    assert lo == pytest.approx(KERN.sigma(0.7) * 0.7, rel=1e-12)
    lo, hi, x, ok = recurrence_step(1.0, 1.0, 0.0, KERN)
    assert hi == pytest.approx(1.0, rel=1e-12)
    assert lo == pytest.approx(1.0, rel=1e-12)


def test_recurrence_decay_rate():
    u = 0.5
    for _ in range(200):
        _, u, _, ok = recurrence_step(u, u, 0.0, KERN)
        assert ok
    u2 = KERN.sigma(u) * u
    assert u2 / u == pytest.approx(2.0 ** (-0.25), rel=1e-9)  # asymptotic contraction factor


def test_recurrence_domain_violation_signal():
    lo, hi, x, ok = recurrence_step(7.0, 7.0, 0.0, KERN)
    assert not ok


def test_propagate_decaying_with_envelope():
    trace = propagate_and_classify(0.9, 0.9, 0.0, KERN, WIN, 40)
    assert trace.classification == "decaying"
    envelope = decay_envelope_constant(0.9, KERN)
    sig0 = KERN.sigma(0.9)
    u = 0.9
    for n in range(1, 41):
        u = KERN.sigma(u) * u
        assert u <= envelope * 2.0 ** (-0.25 * n) * (1.0 + 1e-10)
        assert u < sig0**n  # geometric envelope from the decaying-branch argument


def test_propagate_fixed_point_stays_window():
    trace = propagate_and_classify(1.0, 1.0, 0.0, KERN, WIN, 30)
    assert trace.classification in ("window", "indeterminate")
    assert all(lv["label"] != "escaped-above" for lv in trace.levels)
    assert all(lv["label"] != "decaying" for lv in trace.levels)


def test_propagate_escape_above_window():
    u0 = WIN.v_bar + 0.01
    trace = propagate_and_classify(u0, u0, 0.5 * WIN.w_bar, KERN, WIN, 60)
    assert trace.classification == "escaped-above"
    assert trace.decisive_level is not None and trace.decisive_level <= 60


def test_propagate_x_contraction():
    trace = propagate_and_classify(1.05, 1.05, 0.3, KERN, WIN, 10)
    xs = [lv["x_hi"] for lv in trace.levels]
    assert all(b < a for a, b in zip(xs, xs[1:]))


def test_propagate_determinism():
    a = propagate_and_classify(1.02, 1.05, 0.2, KERN, WIN, 25)
    b = propagate_and_classify(1.02, 1.05, 0.2, KERN, WIN, 25)
    assert a.levels == b.levels and a.classification == b.classification


def test_find_beta_brackets_synthetic_linear():
    # u0(beta) = beta/2 crosses 1 at beta=2 and v_bar at 2*v_bar
    brackets = find_beta_brackets(
        lambda b: b / 2.0,
        lambda b: 0.0,
        KERN,
        WIN,
        0.5,
        4.0,
        tol=1e-7,
        n_levels=8,
        deep_horizon=64,
    )
    assert brackets.beta_minus[0] == pytest.approx(2.0, rel=1e-5)
    assert brackets.beta_plus[0] == pytest.approx(2.0 * WIN.v_bar, rel=1e-5)
    widths = [p - m for m, p in zip(brackets.beta_minus, brackets.beta_plus)]
    assert all(w2 <= w1 + 1e-12 for w1, w2 in zip(widths, widths[1:]))
    assert all(
        (m2 >= m1 - 1e-12) and (p2 <= p1 + 1e-12)
        for m1, m2, p1, p2 in zip(
            brackets.beta_minus, brackets.beta_minus[1:], brackets.beta_plus, brackets.beta_plus[1:]
        )
    )
    # with x0 = 0 the deep bracket collapses onto the unit crossing
    assert brackets.beta_star_lo <= 2.0 <= brackets.beta_star_hi * (1.0 + 1e-6)
    assert (brackets.beta_star_hi - brackets.beta_star_lo) / brackets.beta_star_hi < 1e-4


def test_find_beta_brackets_requires_crossings():
    with pytest.raises(BracketNotFound):
        find_beta_brackets(lambda b: 0.5, lambda b: 0.0, KERN, WIN, 0.5, 4.0)


def test_find_beta_brackets_deterministic():
    args = (lambda b: b / 2.0, lambda b: 0.01, KERN, WIN, 0.5, 4.0)
    a = find_beta_brackets(*args, tol=1e-6, n_levels=5, deep_horizon=48)
    b = find_beta_brackets(*args, tol=1e-6, n_levels=5, deep_horizon=48)
    assert a.as_dict() == b.as_dict()


def test_predicted_limit_values():
    assert predicted_limit(1, 2.0) == pytest.approx(0.5)
    assert predicted_limit(2, 2.0) == pytest.approx(3.0 / 4.0)
    assert predicted_limit(3, 2.0) == pytest.approx(15.0 / 8.0)
    with pytest.raises(ValueError):
        predicted_limit(0, 1.0)


def test_displayed_x_bound_linear_in_b():
    # at fixed beta and u0-cap the displayed bound is exactly linear in b
    from hierosc.numerics import relaxation_factor

    beta, mass, gamma = 1.0, 0.1, 30.0
    f = relaxation_factor(3.0 * beta / (mass * gamma))
    bound = lambda b: 24.0 * b * WIN.v_bar**4 / f
    assert bound(1e-4) / bound(1e-8) == pytest.approx(1e4, rel=1e-12)


@pytest.mark.slow
def test_select_parameters_default_feasible():
    cert = select_parameters(2, 0.25, 0.05)
    assert cert.feasible, cert.checks
    names = {c["name"] for c in cert.checks}
    assert {"well_shape_margin", "x0_displayed_bound_below_w_bar", "rigidity_veto", "b_above_floor"} <= names
    assert cert.params["mass"] * cert.params["gamma"] ** 2 > 36.0 * WIN.v_bar * 1.9


@pytest.mark.slow
def test_select_parameters_rigidity_veto():
    cert = select_parameters(2, 0.25, 0.05, gamma=1.0, mass=60.0, b_start=0.4, b_floor=0.05)
    if cert.params:
        veto = [c for c in cert.checks if c["name"] == "rigidity_veto"]
        assert veto and not veto[0]["pass"]
        assert not cert.feasible
    else:
        assert not cert.feasible
