"""Experiment driver.

Subcommands: spectral (beta scan of the single-site solution), lattice (MC
estimates at one level), rgflow (per-level flow table), bounds (window and
propagation certificate), betastar (nested bisection for the critical
bracket), verify (the cross-module invariant suite).  Every run writes CSV
and JSON artifacts under the output directory; CSVs are timestamp-free so
reruns with fixed seeds are byte-identical, and run metadata (including the
timestamp) goes to meta.json.

Exit codes: 0 success, 1 config error, 2 invariant violation, 3
infeasibility.  Precedence for seed/threads/output: flag > environment
(HIEROSC_SEED, HIEROSC_THREADS, HIEROSC_OUT) > config file.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import verify as verify_mod
from .bounds import (
    BracketNotFound,
    Kernels,
    epsilon_window,
    find_beta_brackets,
    propagate_and_classify,
    select_parameters,
    window_identity_residual,
)
from .config import ConfigError, ExperimentConfig, default_config, dump_config, load_config
from .hierarchy import HierarchyParams
from .lattice import build_lattice_model, mc_estimate
from .rgflow import flow_run_replicated
from .spectral import (
    ModelParams,
    build_and_diagonalize,
    check_initial_bounds,
    eta_and_rigidity,
    solution_record,
    u_hat,
    x_fourpoint,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_INFEASIBLE = 3


def _model_params(cfg: ExperimentConfig, beta: float) -> ModelParams:
    m = cfg.model
    return ModelParams(
        mass=float(m["mass"]),
        a=float(m["a"]),
        b=float(m["b"]),
        beta=beta,
        gaussian_mode=bool(m.get("gaussian_mode", False)),
    )


def _hier(cfg: ExperimentConfig) -> HierarchyParams:
    return HierarchyParams(kappa=int(cfg.hierarchy["kappa"]), delta=float(cfg.hierarchy["delta"]))


def _write_meta(out: Path, cfg: ExperimentConfig, subcommand: str) -> None:
    meta = {
        "subcommand": subcommand,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg.as_dict(),
    }
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def _spectral_point(args):
    cfg_dict, beta = args
    cfg = ExperimentConfig(**cfg_dict)
    sol = build_and_diagonalize(_model_params(cfg, beta), basis_size=cfg.spectral.get("basis_size"))
    rec = solution_record(sol, beta, kappa_max=int(cfg.spectral.get("kappa_max", 8)))
    return beta, rec


def cmd_spectral(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    jobs = [(cfg.as_dict(), beta) for beta in cfg.betas()]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_spectral_point, jobs))
    else:
        results = [_spectral_point(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    records = {f"{beta:.17g}": rec for beta, rec in results}
    with open(out / "spectral.json", "w") as fh:
        json.dump(records, fh, indent=2, sort_keys=True)
    with open(out / "spectral.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "u_hat0", "eta", "gap", "rigidity", "x0", "bounds_ok"])
        for beta, rec in results:
            writer.writerow(
                [
                    f"{beta:.17g}",
                    f"{rec['u_hat']['0']:.17g}",
                    f"{rec['eta']:.17g}",
                    f"{rec['gap']:.17g}",
                    f"{rec['rigidity']:.17g}",
                    f"{rec['x0']:.17g}",
                    int(rec.get("bound_report", {}).get("all_passed", True)),
                ]
            )
    violations = [
        beta for beta, rec in results if not rec.get("bound_report", {}).get("all_passed", True)
    ]
    if violations:
        print(f"initial-bound violation at beta={violations}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _lattice_seed(args):
    cfg_dict, seed = args
    cfg = ExperimentConfig(**cfg_dict)
    mc = cfg.mc
    model = build_lattice_model(
        int(mc.get("level", 0)),
        int(mc["n_slices"]),
        _hier(cfg),
        float(cfg.model["mass"]),
        float(cfg.model["a"]),
        float(cfg.model["b"]),
        cfg.beta,
    )
    est = mc_estimate(
        model,
        sweeps=int(mc["sweeps"]),
        seed=seed,
        thin=int(mc.get("thin", 2)),
        kappa_max=int(mc.get("kappa_max", 4)),
    )
    return seed, est


def cmd_lattice(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    seeds = [int(s) for s in cfg.mc.get("seeds", [1])]
    jobs = [(cfg.as_dict(), s) for s in seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_lattice_seed, jobs))
    else:
        results = [_lattice_seed(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    merged = {}
    for seed, est in results:
        est.write_csv(out / f"lattice_seed{seed}.csv")
        merged[str(seed)] = est.as_dict()
    with open(out / "lattice.json", "w") as fh:
        json.dump(merged, fh, indent=2, sort_keys=True)
    return EXIT_OK


def cmd_rgflow(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    rg = cfg.rg
    table = flow_run_replicated(
        float(cfg.model["mass"]),
        float(cfg.model["a"]),
        float(cfg.model["b"]),
        cfg.beta,
        _hier(cfg),
        int(rg.get("n_max", 6)),
        int(rg["pop"]),
        int(rg.get("cutoff", 16)),
        [int(s) for s in rg.get("seeds", [1, 2, 3, 4])],
        tilt_strength=rg.get("tilt"),
    )
    table.write_csv(out / "rgflow.csv")
    with open(out / "rgflow.json", "w") as fh:
        json.dump({"rows": table.rows}, fh, indent=2, sort_keys=True, default=float)
    return EXIT_OK


def cmd_bounds(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    hier = _hier(cfg)
    window = epsilon_window(hier.kappa, hier.delta, float(cfg.bounds["epsilon"]))
    kernels = Kernels(hier.kappa, hier.delta)
    sol = build_and_diagonalize(_model_params(cfg, cfg.beta), basis_size=cfg.spectral.get("basis_size"))
    u0 = u_hat(sol, cfg.beta, 0.0)
    x0 = max(x_fourpoint(sol, cfg.beta), 0.0)
    trace = propagate_and_classify(u0, u0, x0, kernels, window, int(cfg.bounds.get("n_levels", 12)))
    cert = {
        "window": {
            "epsilon": window.epsilon,
            "v_bar": window.v_bar,
            "w_bar": window.w_bar,
            "w_max": window.w_max,
            "identity_residual": window_identity_residual(window),
        },
        "u0": u0,
        "x0": x0,
        "classification": trace.classification,
        "levels": trace.levels,
    }
    with open(out / "bounds.json", "w") as fh:
        json.dump(cert, fh, indent=2, sort_keys=True, default=float)
    with open(out / "bounds.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "u_lo", "u_hi", "x_hi", "label"])
        for lv in trace.levels:
            writer.writerow(
                [lv["level"], f"{lv['u_lo']:.17g}", f"{lv['u_hi']:.17g}", f"{lv['x_hi']:.17g}", lv["label"]]
            )
    return EXIT_OK


def cmd_betastar(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    hier = _hier(cfg)
    window = epsilon_window(hier.kappa, hier.delta, float(cfg.bounds["epsilon"]))
    kernels = Kernels(hier.kappa, hier.delta)
    sol = build_and_diagonalize(_model_params(cfg, cfg.beta), basis_size=cfg.spectral.get("basis_size"))
    try:
        brackets = find_beta_brackets(
            lambda b: u_hat(sol, b, 0.0),
            lambda b: x_fourpoint(sol, b),
            kernels,
            window,
            float(cfg.bounds.get("beta_lo", 0.02)),
            float(cfg.bounds.get("beta_hi", 10.0)),
            tol=float(cfg.bounds.get("tol", 1e-5)),
            n_levels=int(cfg.bounds.get("n_levels", 12)),
            deep_horizon=int(cfg.bounds.get("deep_horizon", 96)),
        )
    except BracketNotFound as exc:
        print(f"betastar infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    with open(out / "betastar.json", "w") as fh:
        json.dump(brackets.as_dict(), fh, indent=2, sort_keys=True)
    with open(out / "betastar.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "beta_minus", "beta_plus", "certified_plus"])
        for n in range(len(brackets.beta_minus)):
            writer.writerow(
                [
                    n,
                    f"{brackets.beta_minus[n]:.17g}",
                    f"{brackets.beta_plus[n]:.17g}",
                    f"{brackets.certified_plus[n]:.17g}",
                ]
            )
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    report = verify_mod.run_suite(cfg)
    with open(out / "verify.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=float)
    failures = [r["name"] for r in report["checks"] if not r["pass"]]
    for r in report["checks"]:
        print(("PASS " if r["pass"] else "FAIL ") + r["name"])
    if failures:
        print(f"invariant violations: {failures}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


COMMANDS = {
    "spectral": cmd_spectral,
    "lattice": cmd_lattice,
    "rgflow": cmd_rgflow,
    "bounds": cmd_bounds,
    "betastar": cmd_betastar,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierosc", description=__doc__)
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=os.environ.get("HIEROSC_CONFIG"))
    parser.add_argument("--out", default=None, help="output directory (flag > env > config)")
    parser.add_argument("--seed", type=int, default=None, help="override every seed list")
    parser.add_argument("--threads", type=int, default=None)
    return parser


def run_experiment(cfg: ExperimentConfig, subcommand: str, out_dir: str, threads: int = 1) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_meta(out, cfg, subcommand)
    dump_config(cfg, out / "config_used.yaml")
    return COMMANDS[subcommand](cfg, out, threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else default_config()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.mc["seeds"] = [args.seed + i for i in range(len(cfg.mc.get("seeds", [1])))]
        cfg.rg["seeds"] = [args.seed + i for i in range(len(cfg.rg.get("seeds", [1])))]
    out_dir = args.out or os.environ.get("HIEROSC_OUT") or cfg.output
    threads = args.threads if args.threads is not None else int(os.environ.get("HIEROSC_THREADS", "1"))
    try:
        return run_experiment(cfg, args.subcommand, out_dir, threads=threads)
    except BracketNotFound as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except np.linalg.LinAlgError as exc:
        print(f"invariant violation (linear algebra): {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
