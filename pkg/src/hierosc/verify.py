"""Cross-module invariant suite (the ``verify`` subcommand).

Every check runs at desk scale with fixed seeds and reports pass/fail plus
a short detail string; a crash inside a check is a failure, not an abort.
The suite is deterministic by construction.
"""

from __future__ import annotations

import math

import numpy as np

from .bounds import Kernels, epsilon_window, propagate_and_classify, recurrence_step, window_identity_residual
from .config import ExperimentConfig, dump_config, load_config
from .enumeration import exact_enumeration, four_point_tensor, pair_correlations, ring_couplings
from .hierarchy import HierarchyParams, block_members, coupling_matrix, hier_distance_and_coupling
from .lattice import build_lattice_model, gaussian_oracle, mc_estimate, temporal_form_matrix, temporal_mode_weights
from .numerics import expdd2
from .rgflow import ensemble_estimates, init_level0, rg_step
from .spectral import (
    ModelParams,
    build_and_diagonalize,
    double_commutator_error,
    eta_and_rigidity,
    gamma2,
    u_hat,
)
from .ursell import cumulants_from_moments, leeyang_product_fit, moments_from_cumulants, root_locus_check

ROUND_SLACK = 1e-12


def _check(name, fn, checks):
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failure with the message attached
        ok, detail = False, f"exception: {exc!r}"
    checks.append({"name": name, "pass": bool(ok), "detail": detail})


def _hierarchy_metric():
    for kappa in (2, 3):
        hp = HierarchyParams(kappa=kappa, delta=0.3)
        sites = range(48)
        dist = {}
        for l in sites:
            for lp in sites:
                dist[(l, lp)] = hier_distance_and_coupling(l, lp, 1.0, hp)[0]
        for l1 in sites:
            for l2 in sites:
                for l3 in sites:
                    d12, d13, d23 = dist[(l1, l2)], dist[(l1, l3)], dist[(l2, l3)]
                    if d12 > d13 + d23 + ROUND_SLACK:
                        return False, f"triangle failed at {(l1, l2, l3)} kappa={kappa}"
                    pair = sorted([d12, d13, d23])
                    if not (abs(pair[2] - pair[1]) < ROUND_SLACK or pair[2] <= pair[1]):
                        return False, f"two-largest-equal failed at {(l1, l2, l3)}"
    return True, "triangle + ultrametric-type property on sites 0..47, kappa in {2,3}"


def _hierarchy_matrix():
    hp = HierarchyParams(kappa=2, delta=0.25)
    m = coupling_matrix(3, hp)
    if not np.allclose(m, m.T):
        return False, "not symmetric"
    if not np.allclose(np.diag(m), m[0, 0]):
        return False, "diagonal not constant"
    # swapping the two level-2 sub-blocks of the level-3 block preserves m
    perm = np.arange(8)
    perm[:4], perm[4:] = np.arange(4, 8), np.arange(4)
    if not np.allclose(m, m[np.ix_(perm, perm)]):
        return False, "not invariant under sibling block swap"
    row = -m.sum(axis=1)
    target = hp.theta * sum(float(hp.kappa) ** (-mm * hp.delta) for mm in range(1, 4))
    if abs(row[0] - target) > 1e-12:
        return False, f"row sum {row[0]} != {target}"
    return True, "symmetry, constant diagonal, block-permutation invariance, row sums"


def _spectral_uhat_bounds():
    params = ModelParams(mass=1.0, a=1.0, b=0.2, beta=2.0)
    sol = build_and_diagonalize(params)
    beta = 2.0
    u0 = u_hat(sol, beta, 0.0)
    for k in range(-16, 17):
        q = 2.0 * math.pi * k / beta
        val = u_hat(sol, beta, q)
        if val <= 0.0 or val > u0 * (1.0 + ROUND_SLACK):
            return False, f"positivity/max at mode {k}"
        if k != 0 and val > 1.0 / (params.mass * q * q) * (1.0 + ROUND_SLACK):
            return False, f"1/(m q^2) bound at mode {k}"
        if abs(val - u_hat(sol, beta, -q)) > ROUND_SLACK * u0:
            return False, f"evenness at mode {k}"
    return True, "0 < u(q) <= u(0), u(q) <= 1/(m q^2), even in q, modes |k| <= 16"


def _spectral_fourier_sum():
    params = ModelParams(mass=1.0, a=1.0, b=0.2, beta=2.0)
    sol = build_and_diagonalize(params)
    beta = 2.0
    eta = eta_and_rigidity(sol, beta)[0]
    total = u_hat(sol, beta, 0.0) / beta
    for k in range(1, 257):
        total += 2.0 * u_hat(sol, beta, 2.0 * math.pi * k / beta) / beta
    tail = 2.0 / (beta * params.mass) * (beta / (2.0 * math.pi)) ** 2 / 256.0
    if not (abs(eta - total) <= tail + 1e-10):  # nan-proof comparison
        return False, f"eta={eta} vs mode sum={total}, tail bound {tail}"
    return True, f"eta - truncated mode sum = {eta - total:.3e} within tail bound {tail:.3e}"


def _spectral_kms_commutator():
    params = ModelParams(mass=1.5, a=-0.5, b=0.3, beta=3.0)
    sol = build_and_diagonalize(params)
    beta = 3.0
    for tau in (0.3, 1.1, 2.2):
        if abs(gamma2(sol, beta, tau) - gamma2(sol, beta, beta - tau)) > 1e-12:
            return False, f"reflection at tau={tau}"
    err = double_commutator_error(sol)
    if err > 1e-8:
        return False, f"double commutator interior error {err}"
    return True, f"reflection symmetry + double commutator error {err:.2e}"


def _spectral_monotone_beta():
    params = ModelParams(mass=2.0, a=-0.4, b=0.2, beta=1.0)
    sol = build_and_diagonalize(params)
    grid = np.linspace(0.3, 6.0, 12)
    vals = [u_hat(sol, float(b), 0.0) for b in grid]
    if not all(v2 > v1 for v1, v2 in zip(vals, vals[1:])):
        return False, "u0 not increasing on the beta grid"
    return True, "u0(beta) increasing on 12-point grid (empirical check)"


def _lattice_symbol():
    hp = HierarchyParams(kappa=2, delta=0.25)
    model = build_lattice_model(0, 16, hp, 1.3, 0.7, 0.1, 2.5)
    eigs = np.sort(np.linalg.eigvalsh(temporal_form_matrix(model)))
    kappas = np.arange(-(16 // 2 - 1), 16 // 2 + 1)
    lam = temporal_mode_weights(model, kappas)
    expected = np.sort(model.slice_weight / lam)
    if not np.allclose(eigs, expected, rtol=1e-12, atol=1e-12):
        return False, f"max dev {np.abs(eigs - expected).max():.3e}"
    return True, "temporal form eigenvalues match (beta/N)/lambda_q exactly"


def _lattice_gaussian_mc():
    hp = HierarchyParams(kappa=2, delta=0.25)
    model = build_lattice_model(1, 16, hp, 1.0, 1.0, 0.0, 1.0)
    est = mc_estimate(model, sweeps=12000, seed=11, thin=1, kappa_max=2)
    for k in (0, 1, 2):
        q = 2.0 * math.pi * k / 1.0
        oracle = gaussian_oracle(1, hp, 1.0, 1.0, q, n_slices=16, beta=1.0)
        mean, err = est.u_hat[k]
        if abs(mean - oracle) > 3.0 * max(err, 1e-12):
            return False, f"mode {k}: {mean}+-{err} vs oracle {oracle}"
    return True, "b=0 MC matches finite-slice Gaussian oracle within 3 sigma (level 1)"


def _lattice_determinism():
    hp = HierarchyParams(kappa=2, delta=0.25)
    model = build_lattice_model(0, 16, hp, 1.0, -0.5, 0.3, 2.0)
    a = mc_estimate(model, sweeps=10000, seed=5, thin=1, kappa_max=2)
    b = mc_estimate(model, sweeps=10000, seed=5, thin=1, kappa_max=2)
    same = a.u_hat == b.u_hat and a.x_n == b.x_n and a.ursell == b.ursell
    return same, "identical (model, sweeps, seed) give bit-identical estimates"


def _enumeration_inequalities():
    inst = exact_enumeration(ring_couplings(6, 0.35))
    for order, value in inst.ursell.items():
        k = order // 2
        if (-1.0) ** (k - 1) * value < -1e-10 * max(abs(value), 1.0):
            return False, f"sign rule at order {order}"
    pair = pair_correlations(inst)
    four = four_point_tensor(inst)
    n = inst.n_spins
    scale = 1e-12
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    g = four[i, j, k, l]
                    pairing = pair[i, j] * pair[k, l] + pair[i, k] * pair[j, l] + pair[i, l] * pair[j, k]
                    if g > pairing + scale:
                        return False, f"four-point pairing bound at {(i, j, k, l)}"
        for j in range(n):
            if four[i, i, i, j] < pair[i, i] * pair[i, j] - scale:
                return False, f"product lower bound at {(i, j)}"
    return True, "sign rule, pairing upper bound, product lower bound on 6-spin ring"


def _rgflow_zero_tilt():
    hp = HierarchyParams(kappa=2, delta=0.25)
    rng = np.random.default_rng(3)
    ens = init_level0(1.0, 1.0, 0.0, 1.0, 20000, 16, seed=3)
    us = [ensemble_estimates(ens)["u_hat0"]]
    for _ in range(5):
        ens = rg_step(ens, hp, rng, tilt_strength=0.0)
        if not np.allclose(ens.weights(), 1.0 / ens.population):
            return False, "weights not equal with zero tilt"
        us.append(ensemble_estimates(ens)["u_hat0"])
    slope = np.polyfit(np.arange(len(us)), np.log(us), 1)[0]
    fitted = -slope / math.log(hp.kappa)
    if abs(fitted - hp.delta) > 0.02:
        return False, f"decay exponent {fitted} vs {hp.delta}"
    return True, f"zero-tilt weights equal; decay exponent fit {fitted:.4f}"


def _rgflow_permutation():
    hp = HierarchyParams(kappa=2, delta=0.25)
    ens = init_level0(1.0, 1.0, 0.0, 1.0, 5000, 8, seed=9)
    base = ensemble_estimates(ens)
    rng = np.random.default_rng(1)
    perm = rng.permutation(ens.population)
    shuffled = type(ens)(
        level=ens.level,
        beta=ens.beta,
        cutoff=ens.cutoff,
        paths=ens.paths[perm],
        log_weights=ens.log_weights[perm],
    )
    after = ensemble_estimates(shuffled)
    if abs(base["u_hat0"] - after["u_hat0"]) > 1e-14 or abs(base["x_n"] - after["x_n"]) > 1e-12:
        return False, "weighted estimates changed under permutation"
    return True, "ensemble estimates invariant under population permutation"


def _bounds_kernels_window():
    kern = Kernels(2, 0.25)
    if abs(kern.sigma(1.0) - 1.0) > ROUND_SLACK:
        return False, "sigma(1) != 1"
    if abs(kern.sigma(1e-12) - kern.contraction) > 1e-10:
        return False, "sigma(0+) != kappa^-delta"
    if abs(kern.phi(1.0) - 2.0 ** (2 * 0.25 - 1)) > ROUND_SLACK:
        return False, "phi(1) != kappa^(2 delta - 1)"
    win = epsilon_window(2, 0.25, 0.05)
    if abs(kern.sigma(win.v_bar) - 2.0**0.05) > 1e-12:
        return False, "sigma(v_bar) != kappa^eps"
    cap = 2.0 ** (2 * 0.25 + 4 * 0.05 - 1.0)
    for v in np.linspace(1.0, win.v_bar, 64):
        if kern.phi(float(v)) > cap * (1.0 + 1e-12):
            return False, f"phi cap violated at v={v}"
    if abs(window_identity_residual(win)) > 1e-12:
        return False, "endpoint identity residual too large"
    return True, "sigma/phi algebra, window defining condition, phi cap, endpoint identity"


def _bounds_monotone_decay():
    kern = Kernels(2, 0.25)
    win = epsilon_window(2, 0.25, 0.05)
    grid = np.linspace(0.05, kern.domain_max * 0.98, 200)
    vals = [kern.sigma(float(v)) * v for v in grid]
    if not all(b > a for a, b in zip(vals, vals[1:])):
        return False, "sigma(v) v not increasing"
    u, ratios = 0.5, []
    for _ in range(160):
        u_next = kern.sigma(u) * u
        ratios.append(u_next / u)
        u = u_next
    if abs(ratios[-1] - kern.contraction) > 1e-10:
        return False, f"asymptotic rate {ratios[-1]} vs {kern.contraction}"
    u_lo = u_hi = 1.1
    x = 0.3
    for _ in range(20):
        if u_hi > win.v_bar:
            break
        u_lo, u_hi, x_next, ok = recurrence_step(u_lo, u_hi, x, kern)
        if not ok or x_next >= x:
            return False, "x not strictly decreasing below v_bar"
        x = x_next
    trace = propagate_and_classify(0.9, 0.9, 0.0, kern, win, 40)
    if trace.classification != "decaying":
        return False, "u0=0.9 did not classify as decaying"
    trace2 = propagate_and_classify(0.9, 0.9, 0.0, kern, win, 40)
    if trace.levels != trace2.levels:
        return False, "propagation not deterministic"
    return True, "monotone map, asymptotic rate, x contraction, deterministic decay"


def _ursell_roundtrips():
    rng = np.random.default_rng(12)
    c = np.sort(rng.uniform(0.05, 0.6, size=3))[::-1]
    from math import factorial

    values = {2 * k: 2.0 * factorial(2 * k - 1) * (-1.0) ** (k - 1) * float(np.sum(c**k)) for k in range(1, 6)}
    table = cumulants_from_moments(moments_from_cumulants(
        cumulants_from_moments({2: 1.0, 4: 2.7, 6: 10.0, 8: 40.0, 10: 100.0})
    ))
    back = moments_from_cumulants(table)
    ref = {2: 1.0, 4: 2.7, 6: 10.0, 8: 40.0, 10: 100.0}
    if any(abs(back[k] - ref[k]) > 1e-12 * max(abs(ref[k]), 1.0) for k in ref):
        return False, "moment/cumulant round trip"
    from .ursell import UrsellTable

    fit = leeyang_product_fit(UrsellTable(values=values, source="exact", beta=1.0), 3)
    if not fit.valid or np.max(np.abs(np.sort(fit.coefficients)[::-1] - c)) > 1e-8:
        return False, f"product fit round trip: {fit.coefficients} vs {c}"
    inst = exact_enumeration(ring_couplings(4, 0.3))
    rep = root_locus_check(inst.field_polynomial)
    if not rep.passed:
        return False, "ferromagnetic root locus failed"
    return True, "round trips to 1e-12/1e-8, 4-spin ferromagnetic zeros imaginary"


def _config_roundtrip(cfg: ExperimentConfig, tmpdir="/tmp"):
    import os
    import tempfile

    def run():
        with tempfile.NamedTemporaryFile("w", suffix=".yaml", delete=False) as fh:
            path = fh.name
        try:
            dump_config(cfg, path)
            again = load_config(path)
            if again.as_dict() != cfg.as_dict():
                return False, "config did not round trip"
            return True, "config round trips through YAML"
        finally:
            os.unlink(path)

    return run


def run_suite(cfg: ExperimentConfig) -> dict:
    checks = []
    _check("hierarchy_metric", _hierarchy_metric, checks)
    _check("hierarchy_coupling_matrix", _hierarchy_matrix, checks)
    _check("spectral_uhat_bounds", _spectral_uhat_bounds, checks)
    _check("spectral_fourier_sum_rule", _spectral_fourier_sum, checks)
    _check("spectral_kms_and_commutator", _spectral_kms_commutator, checks)
    _check("spectral_monotone_in_beta", _spectral_monotone_beta, checks)
    _check("lattice_temporal_symbol", _lattice_symbol, checks)
    _check("lattice_gaussian_sector_mc", _lattice_gaussian_mc, checks)
    _check("lattice_seed_determinism", _lattice_determinism, checks)
    _check("enumeration_inequalities", _enumeration_inequalities, checks)
    _check("rgflow_zero_tilt_decay", _rgflow_zero_tilt, checks)
    _check("rgflow_permutation_invariance", _rgflow_permutation, checks)
    _check("bounds_kernels_window", _bounds_kernels_window, checks)
    _check("bounds_monotone_decay", _bounds_monotone_decay, checks)
    _check("ursell_roundtrips_roots", _ursell_roundtrips, checks)
    _check("config_roundtrip", _config_roundtrip(cfg), checks)
    return {"checks": checks, "all_passed": all(c["pass"] for c in checks)}
