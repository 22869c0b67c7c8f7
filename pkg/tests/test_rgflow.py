import math

import numpy as np
import pytest

from hierosc.hierarchy import HierarchyParams
from hierosc.lattice import gaussian_oracle
from hierosc.rgflow import PathEnsemble, ensemble_estimates, flow_run, flow_run_replicated, init_level0, rg_step
from hierosc.spectral import ModelParams, build_and_diagonalize, u_hat

HP = HierarchyParams(kappa=2, delta=0.25)


def test_gaussian_init_mode_variances():
    ens = init_level0(1.0, 1.0, 0.0, 1.0, pop=40000, cutoff=8, seed=4)
    qs = ens.frequencies()
    var = ens.paths.var(axis=0)
    for col, q in enumerate(qs):
        target = 1.0 / (q * q + 1.0)
        sigma = target * math.sqrt(2.0 / ens.population)
        assert abs(var[col] - target) < 3.5 * sigma
        mean_sigma = math.sqrt(target / ens.population)
        assert abs(ens.paths[:, col].mean()) < 3.5 * mean_sigma


def test_mc_init_matches_spectral_variances():
    params = ModelParams(mass=1.0, a=-0.4, b=0.4, beta=2.0)
    sol = build_and_diagonalize(params)
    ens = init_level0(1.0, -0.4, 0.4, 2.0, pop=1500, cutoff=6, seed=8, n_slices=32, mc_thin=2)
    est = ensemble_estimates(ens)
    for k in (0, 1, 2):
        target = u_hat(sol, 2.0, 2.0 * math.pi * k / 2.0)
        # thinned MC samples are correlated; allow an autocorrelation factor
        sigma = target * math.sqrt(2.0 / ens.population) * 4.0
        assert abs(est["u_hat"][k] - target) < 4.0 * sigma, (k, est["u_hat"][k], target)


def test_zero_tilt_weights_and_exact_decay_factor():
    rng = np.random.default_rng(5)
    ens = init_level0(1.0, 1.0, 0.0, 1.0, pop=30000, cutoff=8, seed=5)
    u_prev = ensemble_estimates(ens)["u_hat0"]
    ens2 = rg_step(ens, HP, rng, tilt_strength=0.0)
    assert np.allclose(ens2.weights(), 1.0 / ens2.population)
    u_next = ensemble_estimates(ens2)["u_hat0"]
    factor = 2.0 ** (-HP.delta)
    sigma = u_prev * factor * math.sqrt(6.0 / ens.population)
    assert abs(u_next - factor * u_prev) < 3.5 * sigma


def test_flow_matches_gaussian_oracle_small():
    tables = flow_run_replicated(1.0, 1.0, 0.0, 1.0, HP, n_max=3, pop=30000, cutoff=12, seeds=range(6))
    for row in tables.rows[1:]:
        oracle = gaussian_oracle(row["level"], HP, 1.0, 1.0, 0.0)
        assert abs(row["u_hat0"] - oracle) <= 3.0 * max(row["u_hat0_err"], 1e-9), row


def test_flow_x_statistic_null_in_gaussian_sector():
    tables = flow_run_replicated(1.0, 1.0, 0.0, 1.0, HP, n_max=3, pop=20000, cutoff=8, seeds=range(6))
    for row in tables.rows:
        assert abs(row["x_n"]) <= 4.0 * max(row["x_n_err"], 1e-9)
        assert abs(row["u4"]) <= 4.0 * max(row["u4_err"], 1e-9)


def test_ess_bounds_and_normalization():
    ens = init_level0(1.0, 1.0, 0.0, 1.0, pop=5000, cutoff=8, seed=6)
    rng = np.random.default_rng(0)
    stepped = rg_step(ens, HP, rng)
    assert 0.0 < stepped.ess <= stepped.population
    assert stepped.weights().sum() == pytest.approx(1.0, abs=1e-12)


def test_supercritical_tilt_flags_divergence_not_crash():
    table = flow_run(1.0, 1.0, 0.0, 1.0, HP, n_max=8, pop=2000, cutoff=8, seed=7, tilt_strength=60.0)
    assert any(row["diverged"] for row in table.rows)


def test_rg_step_rejects_degenerate_input():
    ens = init_level0(1.0, 1.0, 0.0, 1.0, pop=2000, cutoff=4, seed=9)
    lw = np.full(ens.population, -1e9)
    lw[0] = 0.0
    bad = PathEnsemble(level=0, beta=1.0, cutoff=4, paths=ens.paths, log_weights=lw)
    with pytest.raises(ValueError):
        rg_step(bad, HP, np.random.default_rng(0))


def test_flow_csv(tmp_path):
    table = flow_run_replicated(1.0, 1.0, 0.0, 1.0, HP, n_max=2, pop=2000, cutoff=4, seeds=[1, 2])
    table.write_csv(tmp_path / "flow.csv")
    lines = (tmp_path / "flow.csv").read_text().splitlines()
    assert lines[0] == "level,u_hat,u_hat_err,x,x_err,u4,u4_err,ess,diverged"
    assert len(lines) == 1 + len(table.rows)


def test_decay_exponent_fit():
    tables = flow_run_replicated(
        1.0, 1.0, 0.0, 1.0, HP, n_max=6, pop=30000, cutoff=12, seeds=range(6), tilt_strength=0.0
    )
    levels = tables.column("level")
    us = tables.column("u_hat0")
    slope = np.polyfit(levels, np.log(us), 1)[0]
    fitted = -slope / math.log(2.0)
    assert abs(fitted - HP.delta) < 0.02
