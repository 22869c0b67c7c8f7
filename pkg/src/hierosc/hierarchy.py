"""Hierarchical lattice structure on the nonnegative integers.

Sites are grouped into nested blocks of size kappa**n; the distance between
two sites is kappa**n(l,l') - 1 with n(l,l') the smallest level at which a
block contains both.  Pair couplings decay as a power of that distance, and
the quadratic interaction of a level-n block is assembled from block-sum
matrices, one per level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import RangeError, checked_power

__all__ = [
    "HierarchyParams",
    "Block",
    "normalization_constants",
    "block_members",
    "block_level",
    "hier_distance_and_coupling",
    "coupling_matrix",
]

MAX_MATRIX_SIZE = 4096


@dataclass(frozen=True)
class HierarchyParams:
    """Branching kappa, decay exponent delta, and the derived scale constants.

    theta and j_star are always derived from (kappa, delta); they fix the
    interaction strength so that the recursion's Gaussian fixed point sits
    at unit integrated correlation, which keeps the beta scale meaningful
    across parameter choices.
    """

    kappa: int
    delta: float
    theta: float = field(init=False)
    j_star: float = field(init=False)

    def __post_init__(self):
        if self.kappa < 2 or int(self.kappa) != self.kappa:
            raise ValueError("kappa must be an integer >= 2")
        if not (0.0 < self.delta < 0.5):
            raise ValueError("delta must lie in (0, 1/2)")
        theta = float(self.kappa) ** self.delta - 1.0
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "j_star", theta / (1.0 - float(self.kappa) ** (-1.0 - self.delta)))


def normalization_constants(kappa: int, delta: float) -> HierarchyParams:
    """Build HierarchyParams with theta = kappa**delta - 1 and the matching j_star."""
    return HierarchyParams(kappa=kappa, delta=delta)


@dataclass(frozen=True)
class Block:
    level: int
    index: int
    first: int
    last: int

    @property
    def members(self) -> range:
        return range(self.first, self.last + 1)

    def __len__(self) -> int:
        return self.last - self.first + 1

    def __contains__(self, site: int) -> bool:
        return self.first <= site <= self.last


def block_members(n: int, s: int, params: HierarchyParams) -> Block:
    """The level-n block with index s: sites kappa^n s .. kappa^n (s+1) - 1."""
    if n < 0 or s < 0:
        raise ValueError("level and index must be nonnegative")
    size = checked_power(params.kappa, n)
    first = size * s
    if first > (1 << 62):
        raise RangeError("block start exceeds the supported site range")
    return Block(level=n, index=s, first=first, last=first + size - 1)


def block_level(l: int, lp: int, params: HierarchyParams) -> int:
    """Smallest level n such that some level-n block contains both sites."""
    if l < 0 or lp < 0:
        raise ValueError("sites must be nonnegative")
    n = 0
    a, b = l, lp
    while a != b:
        a //= params.kappa
        b //= params.kappa
        n += 1
        if n > 64:
            raise RangeError("common block level exceeds the supported range")
    return n


def hier_distance_and_coupling(l: int, lp: int, j: float, params: HierarchyParams):
    """Hierarchical distance d(l,l') and pair coupling J*(d+1)^(-1-delta)."""
    n = block_level(l, lp, params)
    d = checked_power(params.kappa, n) - 1
    coupling = j * float(d + 1) ** (-1.0 - params.delta)
    return float(d), coupling


def coupling_matrix(n: int, params: HierarchyParams) -> np.ndarray:
    """Interaction part of the level-n quadratic form on displacements.

    Returns M = -theta * sum_{m=1..n} kappa^{-m(1+delta)} B_m, where B_m is
    1 on every (site, site') pair lying in a common level-m sub-block.  The
    quadratic energy of the block is (1/2) x^T M x; single-site diagonal
    terms are added by consumers (the Gaussian oracle and the MC engine use
    different diagonal shifts).
    """
    if n < 0:
        raise ValueError("level must be nonnegative")
    size = checked_power(params.kappa, n)
    if size > MAX_MATRIX_SIZE:
        raise RangeError(f"kappa^n = {size} exceeds the desk-scale matrix limit")
    m = np.zeros((size, size))
    for level in range(1, n + 1):
        bs = params.kappa**level
        weight = -params.theta * float(params.kappa) ** (-level * (1.0 + params.delta))
        for s in range(size // bs):
            m[s * bs : (s + 1) * bs, s * bs : (s + 1) * bs] += weight
    return m
