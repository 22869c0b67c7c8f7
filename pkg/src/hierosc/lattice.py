"""Lattice approximation: classical ferromagnetic phi^4 chains.

A level-n block with N time slices becomes a classical field on
(sites x slices) with periodic nearest-neighbor temporal bonds of strength
mass*N/beta, on-site weight (beta/N)*((a/2) w^2 + b w^4), and the
hierarchical coupling matrix acting at equal times with weight beta/N.  The
discrete Fourier symbol of the temporal quadratic form reproduces the mode
weights lambda_q^(N) exactly (construction test), and the symbol tends to
the continuum 1/(m q^2 + 1) kernel as N grows.

Estimators are Z2-symmetric: odd moments of the block field vanish
identically, so even moments are taken about zero.  This keeps deep
double-well runs honest when a single chain cannot tunnel between wells.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .hierarchy import HierarchyParams, coupling_matrix
from .numerics import RangeError, batch_means, checked_power, integrated_autocorrelation

__all__ = [
    "LatticeModel",
    "MCEstimates",
    "TuningError",
    "StabilityError",
    "build_lattice_model",
    "temporal_mode_weights",
    "temporal_form_matrix",
    "gaussian_oracle",
    "gaussian_oracle_gamma2",
    "mc_estimate",
]

MAX_VARIABLES = 100_000


class TuningError(RuntimeError):
    """Proposal auto-tuning failed to land in the accepted window."""


class StabilityError(ValueError):
    """Gaussian sector not positive definite."""


@dataclass(frozen=True)
class LatticeModel:
    level: int
    n_slices: int
    beta: float
    mass: float
    a: float
    b: float
    hier: HierarchyParams
    coupling: np.ndarray = field(repr=False)

    @property
    def n_sites(self) -> int:
        return checked_power(self.hier.kappa, self.level)

    @property
    def temporal_bond(self) -> float:
        return self.mass * self.n_slices / self.beta

    @property
    def slice_weight(self) -> float:
        return self.beta / self.n_slices

    @property
    def flux_scale(self) -> float:
        # block field Q_t = kappa^(-n(1+delta)/2) sum_sites w_{l,t}
        return float(self.hier.kappa) ** (-self.level * (1.0 + self.hier.delta) / 2.0)


def build_lattice_model(
    n: int, n_slices: int, hier: HierarchyParams, mass: float, a: float, b: float, beta: float
) -> LatticeModel:
    if n_slices < 2 or n_slices % 2 != 0:
        raise ValueError("slice count must be even and >= 2")
    sites = checked_power(hier.kappa, n)
    if sites * n_slices > MAX_VARIABLES:
        raise RangeError(f"{sites * n_slices} variables exceed the desk-scale limit")
    if b < 0.0:
        raise ValueError("quartic coupling must be nonnegative")
    return LatticeModel(
        level=n,
        n_slices=n_slices,
        beta=beta,
        mass=mass,
        a=a,
        b=b,
        hier=hier,
        coupling=coupling_matrix(n, hier),
    )


def temporal_mode_weights(model: LatticeModel, kappa_index: np.ndarray) -> np.ndarray:
    """lambda_q^(N) = 1 / (m (2N/beta)^2 sin^2(beta q / (2N)) + 1)."""
    n, beta = model.n_slices, model.beta
    q = 2.0 * math.pi * np.asarray(kappa_index, float) / beta
    sym = model.mass * (2.0 * n / beta) ** 2 * np.sin(beta * q / (2.0 * n)) ** 2
    return 1.0 / (sym + 1.0)


def temporal_form_matrix(model: LatticeModel) -> np.ndarray:
    """Per-site temporal quadratic form: bond chain plus the unit reference weight.

    Eigenvalues must equal (beta/N)/lambda_q^(N) over the N mode indices;
    the verify suite asserts this exactly (a deliberate off-by-one in N is
    the canonical mutation this test catches).
    """
    n = model.n_slices
    ring = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    ring[0, -1] -= 1.0
    ring[-1, 0] -= 1.0
    return model.temporal_bond * ring + model.slice_weight * np.eye(n)


def _spatial_sector_matrix(model: LatticeModel, temporal_symbol: float) -> np.ndarray:
    # quadratic form per temporal mode: (symbol + a) I + M, in beta/N units
    size = model.n_sites
    return (temporal_symbol + model.a) * np.eye(size) + model.coupling


def gaussian_oracle(
    n: int,
    hier: HierarchyParams,
    mass: float,
    a: float,
    q: float,
    n_slices: Optional[int] = None,
    beta: Optional[float] = None,
) -> float:
    """Exact b=0 value of the transformed two-point function at frequency q.

    Continuum kernel m q^2 by default; with ``n_slices`` the finite-N
    symbol is used instead.  Raises StabilityError off the positive
    definite region (which is physical information, not a numerics bug).
    """
    m_int = coupling_matrix(n, hier)
    if n_slices is None:
        symbol = mass * q * q
    else:
        if beta is None:
            raise ValueError("finite-slice oracle needs beta")
        nn = n_slices
        symbol = mass * (2.0 * nn / beta) ** 2 * math.sin(beta * q / (2.0 * nn)) ** 2
    size = m_int.shape[0]
    form = (symbol + a) * np.eye(size) + m_int
    eigmin = np.linalg.eigvalsh(form)[0]
    if eigmin <= 0.0:
        raise StabilityError(f"Gaussian quadratic form not positive definite (min eig {eigmin:.3g})")
    ones = np.ones(size)
    scale = float(hier.kappa) ** (-n * (1.0 + hier.delta))
    return scale * float(ones @ np.linalg.solve(form, ones))


def gaussian_oracle_gamma2(
    n: int, hier: HierarchyParams, mass: float, a: float, beta: float, tau: float, kappa_max: int = 400
) -> float:
    """b=0 two-point function at separation tau from the mode sum."""
    total = gaussian_oracle(n, hier, mass, a, 0.0) / beta
    for k in range(1, kappa_max + 1):
        q = 2.0 * math.pi * k / beta
        total += 2.0 * gaussian_oracle(n, hier, mass, a, q) * math.cos(q * tau) / beta
    return total


@dataclass
class MCEstimates:
    """Batch-mean estimates from one chain; errors use >= 16 batches."""

    level: int
    n_slices: int
    beta: float
    sweeps: int
    seed: int
    acceptance: float
    u_hat: dict
    gamma2: dict
    x_n: tuple
    ursell: dict
    tau_int: float
    ess: float

    def as_dict(self):
        return {
            "level": self.level,
            "n_slices": self.n_slices,
            "beta": self.beta,
            "sweeps": self.sweeps,
            "seed": self.seed,
            "acceptance": self.acceptance,
            "u_hat": {str(k): v for k, v in self.u_hat.items()},
            "gamma2": {str(k): v for k, v in self.gamma2.items()},
            "x_n": list(self.x_n),
            "ursell": {str(k): v for k, v in self.ursell.items()},
            "tau_int": self.tau_int,
            "ess": self.ess,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["observable", "q_or_tau", "mean", "stderr", "sweeps", "seed"])
            for k, (m, e) in sorted(self.u_hat.items()):
                writer.writerow(["u_hat", f"{k:d}", f"{m:.17g}", f"{e:.17g}", self.sweeps, self.seed])
            for t, (m, e) in sorted(self.gamma2.items()):
                writer.writerow(["gamma2", f"{t:.17g}", f"{m:.17g}", f"{e:.17g}", self.sweeps, self.seed])
            writer.writerow(["x_n", "", f"{self.x_n[0]:.17g}", f"{self.x_n[1]:.17g}", self.sweeps, self.seed])
            for k, (m, e) in sorted(self.ursell.items()):
                writer.writerow([f"ursell{k}", "", f"{m:.17g}", f"{e:.17g}", self.sweeps, self.seed])


class MetropolisSampler:
    """Single-variable Metropolis with ring-shift moves and block-sum caching.

    Slice updates are vectorized over even/odd sublattices of each site's
    time ring (the spatial coupling acts at equal times, so fixing the other
    sites makes alternating slices conditionally independent).  Ring shifts
    translate one site's whole ring, which moves the zero mode directly and
    hops between wells when a < 0.
    """

    def __init__(self, model: LatticeModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self.field = np.zeros((model.n_sites, model.n_slices))
        self.coupled = model.coupling @ self.field  # cache of M w per slice
        self.step = 0.5
        self.shift_step = 1.0 + math.sqrt(abs(model.a) / (4.0 * model.b)) if model.a < 0.0 and model.b > 0.0 else 1.0
        self.accepted = 0
        self.proposed = 0

    def _slice_half_sweep(self, site: int, parity: int) -> None:
        m = self.model
        x = self.field[site]
        idx = np.arange(parity, m.n_slices, 2)
        prop = self.rng.normal(0.0, self.step, size=idx.size)
        xn = x[idx] + prop
        left = x[(idx - 1) % m.n_slices]
        right = x[(idx + 1) % m.n_slices]
        de = m.temporal_bond * 0.5 * ((xn - left) ** 2 + (xn - right) ** 2 - (x[idx] - left) ** 2 - (x[idx] - right) ** 2)
        de += m.slice_weight * (0.5 * m.a * (xn**2 - x[idx] ** 2) + m.b * (xn**4 - x[idx] ** 4))
        if m.level > 0:
            g = self.coupled[site, idx]
            diag = m.coupling[site, site]
            de += m.slice_weight * (g * prop + 0.5 * diag * prop**2)
        accept = self.rng.random(idx.size) < np.exp(np.minimum(-de, 0.0))
        delta = np.where(accept, prop, 0.0)
        x[idx] += delta
        if m.level > 0:
            self.coupled[:, idx] += np.outer(m.coupling[:, site], delta)
        self.accepted += int(accept.sum())
        self.proposed += idx.size

    def _ring_shift(self, site: int) -> None:
        m = self.model
        u = self.rng.normal(0.0, self.shift_step)
        x = self.field[site]
        de = m.slice_weight * (0.5 * m.a * ((x + u) ** 2 - x**2) + m.b * ((x + u) ** 4 - x**4)).sum()
        if m.level > 0:
            de += m.slice_weight * (u * self.coupled[site].sum() + 0.5 * m.coupling[site, site] * u * u * m.n_slices)
        if self.rng.random() < math.exp(min(-de, 0.0)):
            x += u
            if m.level > 0:
                self.coupled += np.outer(m.coupling[:, site], np.full(m.n_slices, u))

    def _overrelax(self, site: int, parity: int) -> None:
        # exact reflection through the conditional mean; Gaussian sector only
        m = self.model
        x = self.field[site]
        idx = np.arange(parity, m.n_slices, 2)
        left = x[(idx - 1) % m.n_slices]
        right = x[(idx + 1) % m.n_slices]
        lin = m.temporal_bond * (left + right)
        quad = 2.0 * m.temporal_bond + m.slice_weight * m.a
        if m.level > 0:
            lin -= m.slice_weight * (self.coupled[site, idx] - m.coupling[site, site] * x[idx])
            quad += m.slice_weight * m.coupling[site, site]
        mean = lin / quad
        newx = 2.0 * mean - x[idx]
        delta = newx - x[idx]
        x[idx] = newx
        if m.level > 0:
            self.coupled[:, idx] += np.outer(m.coupling[:, site], delta)

    def sweep(self, overrelax: bool = False) -> None:
        for site in range(self.model.n_sites):
            for parity in (0, 1):
                self._slice_half_sweep(site, parity)
            if overrelax and self.model.b == 0.0:
                for parity in (0, 1):
                    self._overrelax(site, parity)
        for site in range(self.model.n_sites):
            self._ring_shift(site)

    def acceptance_rate(self) -> float:
        return self.accepted / max(self.proposed, 1)

    def tune(self, n_sweeps: int = 200, target: float = 0.5) -> None:
        for _ in range(n_sweeps):
            self.accepted = self.proposed = 0
            self.sweep()
            rate = self.acceptance_rate()
            self.step *= 1.05 if rate > target else 0.95
        self.accepted = self.proposed = 0
        for _ in range(20):
            self.sweep()
        if not 0.2 <= self.acceptance_rate() <= 0.8:
            raise TuningError(f"acceptance {self.acceptance_rate():.2f} outside [0.2, 0.8] after tuning")

    def block_field(self) -> np.ndarray:
        return self.model.flux_scale * self.field.sum(axis=0)


def _mode_vectors(beta: float, n_slices: int, kappa_index: int):
    # continuum-normalized basis functions on the slice grid; the zero mode
    # is the constant 1/sqrt(beta), nonzero modes the cos/sin pair
    tau = beta * np.arange(n_slices) / n_slices
    if kappa_index == 0:
        const = np.full(n_slices, 1.0 / math.sqrt(beta))
        return const, np.zeros(n_slices)
    q = 2.0 * math.pi * kappa_index / beta
    return np.sqrt(2.0 / beta) * np.cos(q * tau), np.sqrt(2.0 / beta) * np.sin(q * tau)


def mc_estimate(
    model: LatticeModel,
    sweeps: int,
    seed: int,
    burn_in: Optional[int] = None,
    thin: int = 2,
    kappa_max: int = 4,
    n_batches: int = 32,
    tau_fractions=(0.0, 0.25, 0.5),
) -> MCEstimates:
    """Run one Metropolis chain and estimate the block-field observables.

    Deterministic in (model, sweeps, seed).  Odd moments are imposed to be
    zero (exact Z2 symmetry); errors are batch means over n_batches blocks.
    """
    if sweeps < 10_000:
        raise ValueError("need at least 1e4 sweeps after burn-in")
    if kappa_max >= model.n_slices // 2:
        raise ValueError("kappa_max must stay below the slice Nyquist index")
    rng = np.random.default_rng(seed)
    sampler = MetropolisSampler(model, rng)
    sampler.tune()
    burn = burn_in if burn_in is not None else max(sweeps // 10, 500)
    for _ in range(burn):
        sampler.sweep()

    n_meas = sweeps // thin
    n, beta = model.n_slices, model.beta
    dt = beta / n
    cos_vecs, sin_vecs = [], []
    for k in range(kappa_max + 1):
        c, s = _mode_vectors(beta, n, k)
        cos_vecs.append(c)
        sin_vecs.append(s)
    tau_idx = [int(round(f * n)) % n for f in tau_fractions]

    w_series = np.empty(n_meas)
    mode_sq = np.empty((n_meas, kappa_max + 1))
    gamma_series = np.empty((n_meas, len(tau_idx)))
    qsq_w2 = np.empty(n_meas)
    qsq_mean = np.empty(n_meas)
    qw_prod = np.empty((n_meas, n))
    sampler.accepted = sampler.proposed = 0
    for i in range(n_meas):
        for _ in range(thin):
            sampler.sweep()
        qf = sampler.block_field()
        w = dt * qf.sum()
        w_series[i] = w
        for k in range(kappa_max + 1):
            ck = dt * float(cos_vecs[k] @ qf)
            sk = dt * float(sin_vecs[k] @ qf)
            mode_sq[i, k] = ck * ck if k == 0 else 0.5 * (ck * ck + sk * sk)
        corr = np.fft.irfft(np.abs(np.fft.rfft(qf)) ** 2, n) / n
        gamma_series[i] = corr[tau_idx]
        qsq = qf * qf
        qsq_w2[i] = qsq.mean() * w * w
        qsq_mean[i] = qsq.mean()
        qw_prod[i] = qf * w

    def batched(series):
        return batch_means(series, n_batches)

    u_hat = {}
    for k in range(kappa_max + 1):
        mean, err = batched(mode_sq[:, k])
        u_hat[k] = (mean, err)
    gamma_tbl = {}
    for j, ti in enumerate(tau_idx):
        mean, err = batched(gamma_series[:, j])
        gamma_tbl[ti * dt] = (mean, err)

    # X_n = -( <|Q|^2 W^2>/N' - <|Q|^2><W^2> - 2 sum_t <Q_t W>^2 * dt/beta ) in
    # time-averaged form; batch the full nonlinear combination per block.
    usable = n_meas // n_batches * n_batches

    def block_view(arr):
        return arr[:usable].reshape(n_batches, -1, *arr.shape[1:])

    bw = block_view(w_series)
    bq2w2 = block_view(qsq_w2)
    bq2 = block_view(qsq_mean)
    bqw = block_view(qw_prod)
    x_blocks = np.empty(n_batches)
    u4_blocks = np.empty(n_batches)
    for j in range(n_batches):
        w2 = float((bw[j] ** 2).mean())
        w4 = float((bw[j] ** 4).mean())
        term1 = float(bq2w2[j].mean())
        term2 = float(bq2[j].mean()) * w2
        term3 = 2.0 * dt / beta * float((bqw[j].mean(axis=0) ** 2).sum())
        x_blocks[j] = -(term1 - term2 - term3)
        u4_blocks[j] = w4 - 3.0 * w2 * w2
    x_n = (float(x_blocks.mean()), float(x_blocks.std(ddof=1) / math.sqrt(n_batches)))

    ursell = {2: batched(w_series**2)}
    ursell[4] = (float(u4_blocks.mean()), float(u4_blocks.std(ddof=1) / math.sqrt(n_batches)))
    u6_blocks = np.empty(n_batches)
    u8_blocks = np.empty(n_batches)
    for j in range(n_batches):
        m2 = float((bw[j] ** 2).mean())
        m4 = float((bw[j] ** 4).mean())
        m6 = float((bw[j] ** 6).mean())
        m8 = float((bw[j] ** 8).mean())
        u6_blocks[j] = m6 - 15.0 * m4 * m2 + 30.0 * m2**3
        u8_blocks[j] = m8 - 28.0 * m6 * m2 - 35.0 * m4**2 + 420.0 * m4 * m2**2 - 630.0 * m2**4
    ursell[6] = (float(u6_blocks.mean()), float(u6_blocks.std(ddof=1) / math.sqrt(n_batches)))
    ursell[8] = (float(u8_blocks.mean()), float(u8_blocks.std(ddof=1) / math.sqrt(n_batches)))

    tau_int = integrated_autocorrelation(w_series**2)
    return MCEstimates(
        level=model.level,
        n_slices=n,
        beta=beta,
        sweeps=sweeps,
        seed=seed,
        acceptance=sampler.acceptance_rate(),
        u_hat=u_hat,
        gamma2=gamma_tbl,
        x_n=x_n,
        ursell=ursell,
        tau_int=tau_int,
        ess=n_meas / max(tau_int, 1.0),
    )
