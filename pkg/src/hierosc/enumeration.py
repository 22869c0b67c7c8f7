"""Exact enumeration of small Ising systems.

These are fixtures for the Lee-Yang and sign-rule checks: for up to 20
spins every configuration is summed, giving exact magnetization moments,
joint cumulants, and the partition polynomial in the external-field
fugacity.  Ferromagnetic instances (all couplings >= 0) are the admissible
inputs; an antiferromagnetic instance is the standard negative control for
the zero-locus detector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hierarchy import HierarchyParams, coupling_matrix
from .numerics import RangeError

__all__ = [
    "IsingExact",
    "exact_enumeration",
    "ring_couplings",
    "hierarchical_block_couplings",
    "pair_correlations",
    "four_point_tensor",
]

MAX_SPINS = 20


@dataclass
class IsingExact:
    """Exact data from full configuration sums of an Ising instance."""

    n_spins: int
    couplings: np.ndarray
    moments: dict          # even moments of the total magnetization
    ursell: dict           # even joint cumulants of the total magnetization
    field_polynomial: np.ndarray  # coefficients A_j of p(y) = sum_j A_j y^j, y = exp(2z)
    ferromagnetic: bool
    log_z: float


def _configurations(n: int) -> np.ndarray:
    if n > MAX_SPINS:
        raise RangeError(f"{n} spins exceed the enumeration limit {MAX_SPINS}")
    bits = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
    return 2.0 * bits - 1.0


def exact_enumeration(couplings: np.ndarray, k_max: int = 4) -> IsingExact:
    """Sum over all configurations of E(s) = -(1/2) s^T K s.

    Returns magnetization moments up to order 2*k_max, their cumulants, and
    the field polynomial with coefficients indexed by (M + n)/2 where M is
    the total magnetization of the configuration.
    """
    k = np.asarray(couplings, float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("couplings must be a square matrix")
    if not np.allclose(k, k.T):
        raise ValueError("couplings must be symmetric")
    n = k.shape[0]
    spins = _configurations(n)
    energy = -0.5 * np.einsum("ci,ij,cj->c", spins, k, spins)
    energy -= energy.min()
    weights = np.exp(-energy)
    z = weights.sum()
    mag = spins.sum(axis=1)

    moments = {}
    for kk in range(1, k_max + 1):
        moments[2 * kk] = float((weights * mag ** (2 * kk)).sum() / z)
    ursell = _even_cumulants(moments, k_max)

    coeffs = np.zeros(n + 1)
    np.add.at(coeffs, ((mag + n) / 2).astype(int), weights)
    ferro = bool(np.all(k - np.diag(np.diag(k)) >= 0.0))
    return IsingExact(
        n_spins=n,
        couplings=k,
        moments=moments,
        ursell=ursell,
        field_polynomial=coeffs / z,
        ferromagnetic=ferro,
        log_z=float(np.log(z)),
    )


def _even_cumulants(moments: dict, k_max: int) -> dict:
    # recursive moment->cumulant conversion with odd moments identically zero
    full_m = {0: 1.0}
    for order in range(1, 2 * k_max + 1):
        full_m[order] = moments.get(order, 0.0) if order % 2 == 0 else 0.0
    from math import comb

    cum = {}
    for order in range(1, 2 * k_max + 1):
        value = full_m[order]
        for j in range(1, order):
            if j in cum:
                value -= comb(order - 1, j - 1) * cum[j] * full_m[order - j]
        cum[order] = value
    return {2 * kk: cum[2 * kk] for kk in range(1, k_max + 1)}


def ring_couplings(n: int, strength: float) -> np.ndarray:
    """Periodic nearest-neighbor chain of n spins (single bond for n <= 2)."""
    k = np.zeros((n, n))
    if n < 2:
        return k
    for i in range(n):
        j = (i + 1) % n
        k[i, j] += strength
        k[j, i] += strength
    if n == 2:
        k /= 2.0  # both ring bonds coincide for two sites
    return k


def hierarchical_block_couplings(level: int, hier: HierarchyParams, scale: float) -> np.ndarray:
    """Ferromagnetic couplings from the hierarchical interaction (off-diagonal part)."""
    m = -coupling_matrix(level, hier) * scale
    np.fill_diagonal(m, 0.0)
    return m


def pair_correlations(inst: IsingExact) -> np.ndarray:
    """<s_i s_j> for all pairs (exact)."""
    spins = _configurations(inst.n_spins)
    energy = -0.5 * np.einsum("ci,ij,cj->c", spins, inst.couplings, spins)
    energy -= energy.min()
    w = np.exp(-energy)
    return np.einsum("c,ci,cj->ij", w, spins, spins) / w.sum()


def four_point_tensor(inst: IsingExact) -> np.ndarray:
    """<s_i s_j s_k s_l> for all index 4-tuples (exact; small n only)."""
    if inst.n_spins > 12:
        raise RangeError("four-point tensor limited to 12 spins")
    spins = _configurations(inst.n_spins)
    energy = -0.5 * np.einsum("ci,ij,cj->c", spins, inst.couplings, spins)
    energy -= energy.min()
    w = np.exp(-energy)
    return np.einsum("c,ci,cj,ck,cl->ijkl", w, spins, spins, spins, spins) / w.sum()
