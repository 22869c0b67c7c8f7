"""Single-site spectral solver for H = p^2/(2m) + (a/2) q^2 + b q^4.

The Hamiltonian is represented in a truncated harmonic-oscillator basis with
an auxiliary frequency chosen to keep quartic-dominated regimes well
conditioned, and diagonalized densely.  Everything downstream is an exact
function of (energies, displacement matrix): thermal correlators reduce to
divided differences of exp(-beta*t) at the eigenvalues, so imaginary-time
integrals carry no quadrature error, only truncation.

Conventions: ``u_hat(q)`` is the cosine transform over one period of the
two-point correlator; ``u_hat(0)`` is the central order parameter of the
level recursion.  ``x_fourpoint`` is minus the two-variable-integrated
connected four-point function (nonnegative for this even ferromagnetic
interaction).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigh

from .numerics import expdd1, expdd2, expdd3, relaxation_factor

__all__ = [
    "ModelParams",
    "SpectralSolution",
    "TruncationError",
    "StabilityError",
    "build_and_diagonalize",
    "u_hat",
    "gamma2",
    "eta_and_rigidity",
    "x_fourpoint",
    "u4_integrated",
    "cumulants_via_field_tilt",
    "check_initial_bounds",
    "double_commutator_error",
    "matsubara_frequencies",
    "solution_record",
]


class TruncationError(RuntimeError):
    """Basis truncation did not converge within the allowed size."""


class StabilityError(ValueError):
    """Quadratic form is not positive definite (unphysical Gaussian sector)."""


@dataclass(frozen=True)
class ModelParams:
    """Single-particle model: reduced mass, quadratic and quartic couplings, beta.

    b = 0 is permitted only as an explicit Gaussian oracle mode; gamma is
    the well-shape ratio |a|/b used by the initial bounds (a < 0 only).
    """

    mass: float
    a: float
    b: float
    beta: float
    gaussian_mode: bool = False

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if self.b < 0.0:
            raise ValueError("quartic coupling must be nonnegative")
        if self.b == 0.0 and not self.gaussian_mode:
            raise ValueError("b = 0 requires gaussian_mode=True (oracle use only)")

    @property
    def gamma(self) -> float:
        if self.a >= 0.0 or self.b <= 0.0:
            raise ValueError("gamma = |a|/b is defined for a < 0, b > 0")
        return abs(self.a) / self.b


@dataclass
class SpectralSolution:
    """Eigenvalues and displacement matrix of the truncated single-site problem.

    ho_hamiltonian/ho_position are the exact truncations of the infinite
    matrices in the construction basis; they are kept because the double
    commutator identity is only provably exact there (the corruption from
    truncation is confined to the last rows by bandedness).
    """

    energies: np.ndarray
    q_matrix: np.ndarray
    basis_size: int
    basis_frequency: float
    params: ModelParams
    ho_hamiltonian: np.ndarray  # leading block only (exact truncation entries)
    ho_position: np.ndarray
    truncation_estimate: float
    _q2: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def gap(self) -> float:
        return float(np.diff(self.energies).min())

    def q_squared(self) -> np.ndarray:
        if self._q2 is None:
            self._q2 = self.q_matrix @ self.q_matrix
        return self._q2

    def boltzmann(self, beta: float):
        shifted = self.energies - self.energies[0]
        w = np.exp(-beta * shifted)
        return shifted, w, float(w.sum())


def _ho_operators(mass: float, a: float, b: float, size: int, frequency: float):
    # assemble at size+4 with banded (sparse) products so the sliced blocks
    # are exact entries of the infinite matrices (x^4 couples p to p+-4);
    # dense assembly would cost K^3 for nothing
    import scipy.sparse as sparse

    big = size + 4
    n = np.arange(1, big, dtype=float)
    ladder = sparse.diags(np.sqrt(n), 1, format="csr")
    x = (ladder + ladder.T) / math.sqrt(2.0 * mass * frequency)
    anti = ladder - ladder.T
    p_sq = -(mass * frequency / 2.0) * (anti @ anti)
    x2 = x @ x
    h = p_sq / (2.0 * mass) + 0.5 * a * x2 + b * (x2 @ x2)
    return h[:size, :size].tocsr(), x[:size, :size].tocsr()


def _ho_matrices(mass: float, a: float, b: float, size: int, frequency: float):
    h, x = _ho_operators(mass, a, b, size, frequency)
    return h.toarray(), x.toarray()


def _aux_frequency(params: ModelParams) -> float:
    wa = math.sqrt(abs(params.a) / params.mass) if params.a != 0.0 else 0.0
    wb = (params.b / params.mass) ** (1.0 / 3.0) if params.b > 0.0 else 0.0
    w = max(wa, wb)
    return w if w > 0.0 else 1.0


BOLTZMANN_TAIL = 34.0  # exp(-34) ~ 1.7e-15: states beyond this never matter
COMMUTATOR_BLOCK = 128  # truncation block kept for the commutator identity check


def _levels_required(energies: np.ndarray, beta_ref: float) -> int:
    cut = energies[0] + BOLTZMANN_TAIL / beta_ref
    return int(np.searchsorted(energies, cut)) + 4


def _stable_levels(current: np.ndarray, prev: np.ndarray, rtol: float) -> int:
    # count of leading levels stable under doubling; the per-level floor
    # accounts for eigensolver noise, which scales with the matrix norm
    n = min(len(prev), len(current))
    noise = 32.0 * np.finfo(float).eps * abs(current[n - 1])
    diff = np.abs(current[:n] - prev[:n])
    tol = np.maximum(rtol * np.abs(current[:n]), noise)
    bad = np.nonzero(diff > tol)[0]
    return int(bad[0]) if len(bad) else n


def build_and_diagonalize(
    params: ModelParams,
    basis_size: Optional[int] = None,
    rtol: float = 1e-10,
    k_start: int = 64,
    k_max: int = 4096,
    beta_ref: Optional[float] = None,
) -> SpectralSolution:
    """Diagonalize in a truncated oscillator basis, doubling until converged.

    Convergence: doubling the basis must leave every level in the thermal
    range at ``beta_ref`` (default params.beta) stable to ``rtol`` relative,
    up to the eigensolver noise floor.  Quartic eigenstates spread through
    the oscillator basis like p^(4/3), so the set of converged levels grows
    sublinearly with the basis; tying the requirement to the Boltzmann
    reach keeps the doubling finite in every regime the thermal sums can
    actually use.  With an explicit ``basis_size`` a single solve is done
    and the half-size comparison only sets the reported estimate.
    """
    if params.b == 0.0 and params.a <= 0.0:
        raise StabilityError("b = 0 with a <= 0 has no normalizable Gibbs state")
    freq = _aux_frequency(params)
    beta_ref = beta_ref if beta_ref is not None else params.beta

    def solve(k):
        h_sparse, x_sparse = _ho_operators(params.mass, params.a, params.b, k, freq)
        energies, vectors = eigh(h_sparse.toarray())
        q = vectors.T @ (x_sparse @ vectors)  # sparse-dense keeps this at one K^3 product
        block = min(k, COMMUTATOR_BLOCK)
        h_blk = h_sparse[:block, :block].toarray()
        x_blk = x_sparse[:block, :block].toarray()
        return energies, q, h_blk, x_blk

    if basis_size is not None:
        if basis_size < 4:
            raise ValueError("basis size must be at least 4")
        e_half, *_ = solve(max(basis_size // 2, 4))
        energies, q, h, x = solve(basis_size)
        need = min(_levels_required(energies, beta_ref), len(e_half))
        scale = np.maximum(np.abs(energies[:need]), 1e-30)
        estimate = float(np.max(np.abs(energies[:need] - e_half[:need]) / scale))
        return SpectralSolution(energies, q, basis_size, freq, params, h, x, estimate)

    k = k_start
    prev = None
    while k <= k_max:
        energies, q, h, x = solve(k)
        if prev is not None:
            need = _levels_required(energies, beta_ref)
            stable = _stable_levels(energies, prev, rtol)
            if stable >= need:
                scale = np.maximum(np.abs(energies[:need]), 1e-30)
                estimate = float(np.max(np.abs(energies[:need] - prev[:need]) / scale))
                return SpectralSolution(energies, q, k, freq, params, h, x, estimate)
        prev = energies
        k *= 2
    raise TruncationError(
        f"spectrum not converged to rtol={rtol} at basis size {k_max} "
        f"(params mass={params.mass}, a={params.a}, b={params.b}, beta_ref={beta_ref})"
    )


def matsubara_frequencies(beta: float, kappa_max: int) -> np.ndarray:
    """Frequencies 2*pi*kappa/beta for kappa = -kappa_max .. kappa_max."""
    return 2.0 * math.pi * np.arange(-kappa_max, kappa_max + 1) / beta


def u_hat(sol: SpectralSolution, beta: float, q: float) -> float:
    """Cosine transform of the two-point correlator at frequency q.

    Double spectral sum with energy denominators; the q = 0 limit is the
    first divided difference of the Boltzmann factor, handled without
    cancellation at (near-)degenerate pairs.
    """
    shifted, w, z = sol.boltzmann(beta)
    qm = sol.q_matrix
    if q == 0.0:
        kernel = -expdd1(shifted[:, None], shifted[None, :], beta)
    else:
        d = shifted[:, None] - shifted[None, :]
        diff = w[None, :] - w[:, None]
        x = beta * d
        near = np.abs(x) < 1e-3  # cancellation regime: series keeps full precision
        if np.any(near):
            wp = np.broadcast_to(w[None, :], d.shape)[near]
            xs = x[near]
            diff[near] = wp * xs * (1.0 - 0.5 * xs + xs * xs / 6.0)
        kernel = d / (q * q + d * d) * diff
    return float(np.sum(qm * qm * kernel) / z)


def u_hat_table(sol: SpectralSolution, beta: float, kappa_max: int):
    qs = matsubara_frequencies(beta, kappa_max)
    return qs, np.array([u_hat(sol, beta, float(q)) for q in qs])


def gamma2(sol: SpectralSolution, beta: float, tau: float) -> float:
    """Two-point correlator at imaginary-time separation tau in [0, beta]."""
    if not 0.0 <= tau <= beta:
        raise ValueError("tau must lie in [0, beta]")
    shifted, _, z = sol.boltzmann(beta)
    qm = sol.q_matrix
    expo = -(beta - tau) * shifted[:, None] - tau * shifted[None, :]
    return float(np.sum(qm * qm * np.exp(expo)) / z)


def eta_and_rigidity(sol: SpectralSolution, beta: float):
    """(second moment, spectral gap, mass*gap^2, suppressed flag)."""
    shifted, w, z = sol.boltzmann(beta)
    qm = sol.q_matrix
    eta = float(np.einsum("p,pq,pq->", w, qm, qm) / z)
    gap = sol.gap
    rigidity = sol.params.mass * gap * gap
    return eta, gap, rigidity, rigidity > 1.0


def _thermal_cut(shifted: np.ndarray, beta: float, tail: float = 50.0) -> float:
    return tail / beta


def x_fourpoint(sol: SpectralSolution, beta: float) -> float:
    """Minus the connected four-point function integrated over two times.

    X = eta*beta*u0 + 2*u0^2 - int int <w(0)^2 w(t1) w(t2)> dt1 dt2, with the
    moment integral done exactly: each ordered-time block is a second
    divided difference of exp(-beta*t) at three eigenvalues.  Triple sum is
    pruned by matrix-element support and Boltzmann reach.
    """
    shifted, _, z = sol.boltzmann(beta)
    qm = sol.q_matrix
    q2 = sol.q_squared()
    u0 = u_hat(sol, beta, 0.0)
    eta = eta_and_rigidity(sol, beta)[0]
    thresh = 1e-14 * np.abs(qm).max()
    cut = _thermal_cut(shifted, beta)
    band = np.abs(q2) > thresh
    total = 0.0
    for p in range(len(shifted)):
        r_idx = np.nonzero(band[p])[0]
        if len(r_idx) == 0:
            continue
        # r_idx is sorted: its first entry is the lowest energy reachable in
        # two displacement hops, which bounds the triple minimum from below
        if shifted[p] > cut and shifted[r_idx[0]] > cut:
            continue
        s_idx = np.nonzero(np.abs(qm[:, p]) > thresh)[0]
        if len(s_idx) == 0:
            continue
        weights = expdd2(shifted[r_idx][:, None], shifted[s_idx][None, :], shifted[p], beta)
        total += np.einsum(
            "r,rs,s,rs->", q2[p, r_idx], qm[np.ix_(r_idx, s_idx)], qm[s_idx, p], weights
        )
    moment_integral = 2.0 * total / z
    return eta * beta * u0 + 2.0 * u0 * u0 - moment_integral


def u4_integrated(sol: SpectralSolution, beta: float) -> float:
    """Connected four-point function integrated over all four times.

    Moment part: closed four-step walks in the displacement matrix weighted
    by third divided differences; connected part subtracts the three
    Gaussian pairings (beta*u0)^2 each.
    """
    shifted, _, z = sol.boltzmann(beta)
    qm = sol.q_matrix
    u0 = u_hat(sol, beta, 0.0)
    thresh = 1e-14 * np.abs(qm).max()
    cut = _thermal_cut(shifted, beta)
    supports = [np.nonzero(np.abs(qm[p]) > thresh)[0] for p in range(len(shifted))]
    # the four-index minimum energy can undercut E_{p1} by at most two band reaches
    reach_down = max(
        (float(shifted[p] - shifted[s].min()) for p, s in enumerate(supports) if len(s)),
        default=0.0,
    )
    total = 0.0
    for p1 in range(len(shifted)):
        s1 = supports[p1]
        if len(s1) == 0 or shifted[p1] - 2.0 * reach_down > cut:
            continue
        # vectorize over (p2, p3, p4) with p2, p4 in the support of p1
        for p2 in s1:
            s2 = supports[p2]
            if len(s2) == 0:
                continue
            w = expdd3(
                shifted[p1], shifted[p2], shifted[s2][:, None], shifted[s1][None, :], beta
            )
            total += qm[p1, p2] * np.einsum(
                "c,cr,r,cr->", qm[p2, s2], qm[np.ix_(s2, s1)], qm[s1, p1], w
            )
    moment = -6.0 * beta * total / z  # 4! * (beta/4) * (-DD3), DD3 < 0
    return moment - 3.0 * (beta * u0) ** 2


def cumulants_via_field_tilt(params: ModelParams, beta: float, basis_size: int = 160, step: Optional[float] = None):
    """(U2, U4) of the integrated path from the tilted partition function.

    Adding a linear field -z*q to the Hamiltonian makes log Z(z)/Z(0) the
    cumulant generating function of the time-integrated displacement; U2
    and U4 come from an even polynomial fit at four field values.  Used as
    an independent oracle for the divided-difference route.
    """
    freq = _aux_frequency(params)

    def log_z(zval: float) -> float:
        h, x = _ho_matrices(params.mass, params.a, params.b, basis_size, freq)
        energies = eigh(h - zval * x, eigvals_only=True)
        e0 = energies[0]
        return -beta * e0 + math.log(np.exp(-beta * (energies - e0)).sum())

    base = log_z(0.0)
    sol = build_and_diagonalize(params, basis_size=basis_size)
    u2_scale = max(beta * u_hat(sol, beta, 0.0), 1e-12)
    h = step if step is not None else 0.25 / math.sqrt(u2_scale)
    zs = np.array([h, 2.0 * h, 3.0 * h, 4.0 * h])
    vals = np.array([log_z(z) - base for z in zs])
    # even polynomial g(z) = c1 z^2 + c2 z^4 + c3 z^6 + c4 z^8, exact solve
    vander = np.vander(zs**2, 4, increasing=True) * (zs**2)[:, None]
    coef = np.linalg.solve(vander, vals)
    u2 = 2.0 * coef[0]
    u4 = 24.0 * coef[1]
    return float(u2), float(u4)


def double_commutator_error(sol: SpectralSolution) -> float:
    """Max deviation of [q,[H,q]] from 1/mass on the interior block.

    Computed in the construction basis where bandedness confines truncation
    corruption to the last two rows/columns, so the interior (indices below
    block-2) obeys the identity exactly up to rounding.  The deviation is
    reported relative to the exact value 1/mass.
    """
    h, x = sol.ho_hamiltonian, sol.ho_position
    comm = 2.0 * (x @ h @ x) - (x @ x) @ h - h @ (x @ x)
    interior = comm[:-2, :-2]
    target = np.eye(interior.shape[0]) / sol.params.mass
    return float(np.abs(interior - target).max() * sol.params.mass)


def gamma4_contact_integral(sol: SpectralSolution, beta: float) -> float:
    """int int <w(t)^3 w(t')> dt dt' over the beta-square (exact in time)."""
    shifted, _, z = sol.boltzmann(beta)
    qm = sol.q_matrix
    q3 = qm @ qm @ qm
    kernel = -expdd1(shifted[:, None], shifted[None, :], beta)
    return float(beta * np.sum(q3 * qm.T * kernel) / z)


@dataclass
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool

    def as_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "pass": self.passed}


@dataclass
class InitialBoundReport:
    checks: list
    sum_rule_residual: float
    u0: float
    eta: float
    x0: float

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self):
        return {
            "checks": [c.as_dict() for c in self.checks],
            "sum_rule_residual": self.sum_rule_residual,
            "u0": self.u0,
            "eta": self.eta,
            "x0": self.x0,
            "all_passed": self.all_passed,
        }


def check_initial_bounds(sol: SpectralSolution, beta: float, slack: float = 1e-9) -> InitialBoundReport:
    """Verify the a<0 bracket inequalities on u_hat(0), eta, and X.

    All comparisons carry a relative slack for rounding.  The upper bound
    with the square root uses the form that follows from the quadratic
    inequality 1 >= -|a| u0 + 4 (b/beta) u0^2 (16 b / (beta a^2) under the
    root); at |a| = 1 it coincides with the gamma-only form.
    """
    params = sol.params
    if params.a >= 0.0:
        raise ValueError("initial bounds require a < 0")
    a_abs = abs(params.a)
    b = params.b
    gamma = params.gamma
    mass = params.mass
    u0 = u_hat(sol, beta, 0.0)
    eta = eta_and_rigidity(sol, beta)[0]
    x0 = x_fourpoint(sol, beta)
    f_low = relaxation_factor(3.0 * beta / (mass * gamma))
    lower = (beta * gamma / 12.0) * f_low
    upper_sqrt = (beta * a_abs / (8.0 * b)) * (1.0 + math.sqrt(1.0 + 16.0 * b / (beta * a_abs * a_abs)))
    eta_lower_u = beta * eta * relaxation_factor(beta / (4.0 * mass * eta))
    x_bound_displayed = 24.0 * b * u0**4 / f_low
    x_bound_corrected = x_bound_displayed / beta

    def chk(name, lhs, rhs):
        tol = slack * max(abs(lhs), abs(rhs), 1.0)
        return BoundCheck(name, float(lhs), float(rhs), float(rhs - lhs), lhs <= rhs + tol)

    checks = [
        chk("u0_lower_well", lower, u0),
        chk("u0_upper_sqrt", u0, upper_sqrt),
        chk("u0_upper_beta_eta", u0, beta * eta),
        chk("u0_lower_eta_relaxation", eta_lower_u, u0),
        chk("eta_lower_bogolyubov", gamma / 12.0, eta),
        chk("x0_upper_corrected", x0, x_bound_corrected),
        chk("x0_nonnegative", 0.0, x0),
    ]
    contact = gamma4_contact_integral(sol, beta)
    residual = 1.0 - (params.a * u0 + (4.0 * b / beta) * contact)
    return InitialBoundReport(checks=checks, sum_rule_residual=float(residual), u0=u0, eta=eta, x0=x0)


def solution_record(sol: SpectralSolution, beta: float, kappa_max: int = 8) -> dict:
    """JSON-serializable summary of the spectral solution at one beta."""
    qs, table = u_hat_table(sol, beta, kappa_max)
    eta, gap, rigidity, suppressed = eta_and_rigidity(sol, beta)
    rec = {
        "params": {
            "mass": sol.params.mass,
            "a": sol.params.a,
            "b": sol.params.b,
            "beta": beta,
        },
        "basis_size": sol.basis_size,
        "basis_frequency": sol.basis_frequency,
        "truncation_estimate": sol.truncation_estimate,
        "energies": [float(e) for e in sol.energies[:9]],
        "u_hat": {str(int(round(q * beta / (2 * math.pi)))): float(v) for q, v in zip(qs, table)},
        "eta": eta,
        "gap": gap,
        "rigidity": rigidity,
        "suppressed": suppressed,
        "x0": x_fourpoint(sol, beta),
    }
    if sol.params.a < 0.0 and sol.params.b > 0.0:
        rec["bound_report"] = check_initial_bounds(sol, beta).as_dict()
    return rec


def dump_record(record: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
