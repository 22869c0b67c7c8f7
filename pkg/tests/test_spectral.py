import math

import numpy as np
import pytest

from hierosc.spectral import (
    ModelParams,
    StabilityError,
    build_and_diagonalize,
    check_initial_bounds,
    cumulants_via_field_tilt,
    double_commutator_error,
    eta_and_rigidity,
    gamma2,
    u4_integrated,
    u_hat,
    x_fourpoint,
)


@pytest.fixture(scope="module")
def harmonic():
    return build_and_diagonalize(ModelParams(mass=1.0, a=1.0, b=0.0, beta=4.0, gaussian_mode=True), basis_size=128)


@pytest.fixture(scope="module")
def quartic():
    return build_and_diagonalize(ModelParams(mass=1.5, a=-0.5, b=0.3, beta=3.0))


def test_harmonic_spectrum_exact(harmonic):
    expected = np.arange(9) + 0.5
    assert np.allclose(harmonic.energies[:9], expected, atol=1e-12)


def test_harmonic_u_hat_oracle(harmonic):
    # Gaussian reference measure: covariance kernel 1/(m q^2 + a)
    for beta in (1.0, 4.0):
        for k in range(-8, 9):
            q = 2.0 * math.pi * k / beta
            assert u_hat(harmonic, beta, q) == pytest.approx(1.0 / (q * q + 1.0), rel=1e-10)


def test_harmonic_gamma2_propagator(harmonic):
    beta = 4.0
    for tau in (0.0, 0.7, 2.0, 3.3):
        expected = math.cosh(beta / 2.0 - abs(beta / 2.0 - tau)) / (2.0 * math.sinh(beta / 2.0))
        assert gamma2(harmonic, beta, tau) == pytest.approx(expected, rel=1e-10)


def test_harmonic_eta_low_temperature_limit(harmonic):
    eta, gap, rigidity, suppressed = eta_and_rigidity(harmonic, 60.0)
    assert eta == pytest.approx(0.5, rel=1e-10)  # ground-state variance 1/(2 m w)
    assert gap == pytest.approx(1.0, abs=1e-11)
    assert rigidity == pytest.approx(1.0, abs=1e-10)


def test_harmonic_fourth_cumulants_vanish(harmonic):
    assert abs(x_fourpoint(harmonic, 2.0)) < 1e-12
    assert abs(u4_integrated(harmonic, 2.0)) < 1e-10


def test_parity_selection_rule(harmonic, quartic):
    for sol in (harmonic, quartic):
        q = sol.q_matrix
        # even potential: matrix elements vanish between same-parity states
        assert abs(q[0, 0]) < 1e-12 and abs(q[1, 1]) < 1e-12
        assert abs(q[0, 2]) < 1e-10


def test_perturbative_gap_shift():
    b = 1e-8
    sol = build_and_diagonalize(ModelParams(mass=1.0, a=1.0, b=b, beta=1.0), basis_size=64)
    gap = sol.energies[1] - sol.energies[0]
    assert gap == pytest.approx(1.0, abs=1e-6)
    # first order in the quartic: levels shift by 3b(2p^2+2p+1)/4, gap by 3b
    assert gap == pytest.approx(1.0 + 3.0 * b, abs=1e-10)


def test_kms_reflection(quartic):
    beta = 3.0
    for tau in (0.2, 1.0, 1.4):
        assert gamma2(quartic, beta, tau) == pytest.approx(gamma2(quartic, beta, beta - tau), abs=1e-13)
    with pytest.raises(ValueError):
        gamma2(quartic, beta, beta + 0.1)


def test_gamma2_at_zero_is_eta(quartic):
    beta = 3.0
    assert gamma2(quartic, beta, 0.0) == pytest.approx(eta_and_rigidity(quartic, beta)[0], rel=1e-12)


def test_u_hat_integral_consistency(quartic):
    # int_0^beta gamma2(0, tau) dtau = u_hat(0): Gauss-Legendre vs exact kernel
    beta = 3.0
    nodes, weights = np.polynomial.legendre.leggauss(80)
    taus = 0.5 * beta * (nodes + 1.0)
    integral = 0.5 * beta * sum(w * gamma2(quartic, beta, float(t)) for w, t in zip(weights, taus))
    assert integral == pytest.approx(u_hat(quartic, beta, 0.0), rel=1e-9)


def test_u_hat_bounds(quartic):
    beta = 3.0
    u0 = u_hat(quartic, beta, 0.0)
    for k in range(1, 12):
        q = 2.0 * math.pi * k / beta
        val = u_hat(quartic, beta, q)
        assert 0.0 < val <= u0
        assert val <= 1.0 / (quartic.params.mass * q * q)


def test_x_fourpoint_cross_checked_by_field_tilt():
    params = ModelParams(mass=2.0, a=-0.6, b=0.25, beta=2.5)
    sol = build_and_diagonalize(params)
    beta = 2.5
    u4_walks = u4_integrated(sol, beta)
    u2_tilt, u4_tilt = cumulants_via_field_tilt(params, beta, basis_size=160)
    assert u2_tilt == pytest.approx(beta * u_hat(sol, beta, 0.0), rel=1e-8)
    assert u4_tilt == pytest.approx(u4_walks, rel=2e-4)
    # the two-time-integrated statistic dominates the fully integrated cumulant
    x0 = x_fourpoint(sol, beta)
    assert x0 > 0.0
    assert abs(u4_walks) / beta**2 <= x0 * (1.0 + 1e-10)


def test_initial_bounds_report():
    sol = build_and_diagonalize(ModelParams(mass=20.0, a=-1.0, b=0.05, beta=4.0))
    report = check_initial_bounds(sol, 4.0)
    assert report.all_passed, [c.name for c in report.checks if not c.passed]
    assert abs(report.sum_rule_residual) < 1e-3
    assert report.x0 > 0.0


def test_small_beta_u0_vanishes():
    sol = build_and_diagonalize(ModelParams(mass=1.0, a=-0.25, b=0.05, beta=0.3))
    vals = [u_hat(sol, b, 0.0) for b in (0.8, 0.5, 0.3)]
    assert vals[0] > vals[1] > vals[2]  # shrinking toward zero with beta
    assert vals[2] < 0.35


def test_rigidity_mass_scaling():
    # light-mass scaling of mass*gap^2 ~ mass^(-1/3) at fixed potential
    masses = np.geomspace(1e-3, 1e-1, 7)
    rig = []
    for m in masses:
        sol = build_and_diagonalize(ModelParams(mass=float(m), a=-1.0, b=5.0, beta=1.0), basis_size=96)
        rig.append(eta_and_rigidity(sol, 1.0)[2])
    slope = np.polyfit(np.log(masses), np.log(rig), 1)[0]
    assert slope == pytest.approx(-1.0 / 3.0, abs=0.04)


def test_double_commutator_interior(harmonic, quartic):
    assert double_commutator_error(harmonic) < 1e-10
    assert double_commutator_error(quartic) < 1e-8


def test_deep_well_degenerate_pair_is_handled():
    sol = build_and_diagonalize(ModelParams(mass=100.0, a=-1.0, b=0.02, beta=10.0))
    assert np.all(np.diff(sol.energies) >= -1e-9)
    u0 = u_hat(sol, 10.0, 0.0)
    assert np.isfinite(u0) and u0 > 0.0


def test_gaussian_mode_guard():
    with pytest.raises(ValueError):
        ModelParams(mass=1.0, a=1.0, b=0.0, beta=1.0)
    with pytest.raises(StabilityError):
        build_and_diagonalize(ModelParams(mass=1.0, a=-1.0, b=0.0, beta=1.0, gaussian_mode=True))
