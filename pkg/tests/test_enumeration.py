import itertools
import math

import numpy as np
import pytest

from hierosc.enumeration import (
    exact_enumeration,
    four_point_tensor,
    hierarchical_block_couplings,
    pair_correlations,
    ring_couplings,
)
from hierosc.hierarchy import HierarchyParams
from hierosc.numerics import RangeError


def test_single_free_spin():
    inst = exact_enumeration(np.zeros((1, 1)))
    assert inst.ursell[2] == pytest.approx(1.0)
    assert inst.ursell[4] == pytest.approx(-2.0)
    assert np.allclose(inst.field_polynomial, [0.5, 0.5])  # cosh(z) as (y^0 + y^1)/2 up to e^-z


def test_two_uncoupled_spins_additivity():
    inst = exact_enumeration(np.zeros((2, 2)))
    assert inst.ursell[2] == pytest.approx(2.0)
    assert inst.ursell[4] == pytest.approx(-4.0)
    assert inst.ursell[6] == pytest.approx(2 * 16.0)
    assert inst.ursell[8] == pytest.approx(2 * -272.0)


def test_moments_against_independent_product_sum():
    k = ring_couplings(3, 0.4)
    inst = exact_enumeration(k)
    z = m2 = m4 = 0.0
    for spins in itertools.product((-1.0, 1.0), repeat=3):
        s = np.array(spins)
        w = math.exp(0.5 * float(s @ k @ s))
        mag = s.sum()
        z += w
        m2 += w * mag**2
        m4 += w * mag**4
    assert inst.moments[2] == pytest.approx(m2 / z, rel=1e-13)
    assert inst.moments[4] == pytest.approx(m4 / z, rel=1e-13)


def test_sign_rule_on_ferromagnetic_instances():
    hp = HierarchyParams(kappa=2, delta=0.25)
    fixtures = [
        ring_couplings(5, 0.3),
        ring_couplings(8, 0.15),
        hierarchical_block_couplings(3, hp, 2.0),
    ]
    for k in fixtures:
        inst = exact_enumeration(k)
        assert inst.ferromagnetic
        for order, value in inst.ursell.items():
            kk = order // 2
            assert (-1.0) ** (kk - 1) * value >= -1e-10 * max(abs(value), 1.0), order


def test_field_polynomial_is_normalized_and_symmetric():
    inst = exact_enumeration(ring_couplings(6, 0.25))
    assert inst.field_polynomial.sum() == pytest.approx(1.0, rel=1e-13)
    assert np.allclose(inst.field_polynomial, inst.field_polynomial[::-1], rtol=1e-13)


def test_pairing_upper_bound_and_product_lower_bound():
    inst = exact_enumeration(ring_couplings(5, 0.45))
    pair = pair_correlations(inst)
    four = four_point_tensor(inst)
    n = inst.n_spins
    for i, j, k, l in itertools.product(range(n), repeat=4):
        g = four[i, j, k, l]
        pairing = pair[i, j] * pair[k, l] + pair[i, k] * pair[j, l] + pair[i, l] * pair[j, k]
        assert g <= pairing + 1e-12
    for i, j in itertools.product(range(n), repeat=2):
        assert four[i, i, i, j] >= pair[i, i] * pair[i, j] - 1e-12


def test_antiferromagnetic_flagged():
    k = -0.6 * ring_couplings(4, 1.0)
    inst = exact_enumeration(k)
    assert not inst.ferromagnetic


def test_rejects_oversized_and_asymmetric():
    with pytest.raises(RangeError):
        exact_enumeration(np.zeros((21, 21)))
    bad = np.zeros((3, 3))
    bad[0, 1] = 1.0
    with pytest.raises(ValueError):
        exact_enumeration(bad)
