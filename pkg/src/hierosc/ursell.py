"""Cumulant tables, the product representation of the generating function,
and the inequality suite for integrated joint cumulants.

The generating function of the time-integrated block field is even and
entire with purely imaginary zeros for ferromagnetic instances; its product
form 1 + c_j z^2 factors turn the integrated cumulants into power sums of
the c_j, which is what the fit inverts (Newton identities + companion
matrix roots).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from math import comb, factorial
from typing import Optional

import numpy as np

__all__ = [
    "UrsellTable",
    "LeeYangCoeffs",
    "cumulants_from_moments",
    "moments_from_cumulants",
    "leeyang_product_fit",
    "inequality_suite",
    "root_locus_check",
    "even_polynomial_zsq_roots",
]


@dataclass
class UrsellTable:
    """Integrated even cumulants U_2, U_4, ... with provenance.

    source is one of 'exact' | 'spectral' | 'mc'; stochastic tables carry a
    parallel errors dict and comparisons use 3 combined standard errors.
    """

    values: dict
    source: str
    beta: float
    errors: Optional[dict] = None

    def order_max(self) -> int:
        return max(self.values)

    def sigma(self, order: int) -> float:
        if self.errors is None:
            return 0.0
        return self.errors.get(order, 0.0)

    def sign_rule_report(self):
        rows = []
        for order, value in sorted(self.values.items()):
            k = order // 2
            signed = (-1.0) ** (k - 1) * value
            tol = 3.0 * self.sigma(order) if self.errors else 1e-12 * max(abs(value), 1.0)
            rows.append({"order": order, "signed_value": signed, "pass": bool(signed >= -tol)})
        return rows


def cumulants_from_moments(moments: dict, beta: float = 1.0, source: str = "exact", errors=None) -> UrsellTable:
    """Even-moment table -> even-cumulant table (odd moments vanish by symmetry)."""
    orders = sorted(moments)
    if any(o % 2 for o in orders):
        raise ValueError("only even moments are admissible (odd vanish by symmetry)")
    top = max(orders)
    if set(orders) != {2 * k for k in range(1, top // 2 + 1)}:
        raise ValueError("moment table must contain consecutive even orders 2..2k")
    full = {0: 1.0}
    for order in range(1, top + 1):
        full[order] = moments.get(order, 0.0) if order % 2 == 0 else 0.0
    cum = {}
    for order in range(1, top + 1):
        value = full[order]
        for j in range(1, order):
            if j in cum and cum[j] != 0.0:
                value -= comb(order - 1, j - 1) * cum[j] * full[order - j]
        cum[order] = value
    out = {order: cum[order] for order in orders}
    return UrsellTable(values=out, source=source, beta=beta, errors=errors)


def moments_from_cumulants(table: UrsellTable) -> dict:
    """Inverse conversion, for round-trip checks."""
    top = table.order_max()
    cum = {order: table.values.get(order, 0.0) if order % 2 == 0 else 0.0 for order in range(1, top + 1)}
    full = {0: 1.0}
    for order in range(1, top + 1):
        value = cum[order]
        for j in range(1, order):
            value += comb(order - 1, j - 1) * cum[j] * full[order - j]
        full[order] = value
    return {order: full[order] for order in sorted(table.values)}


@dataclass
class LeeYangCoeffs:
    coefficients: np.ndarray
    residuals: dict
    valid: bool
    message: str = ""


def leeyang_product_fit(table: UrsellTable, j_max: int, tol: float = 1e-8) -> LeeYangCoeffs:
    """Recover the leading product coefficients c_1 >= ... >= c_jmax > 0.

    The integrated cumulants give power sums p_k = (-1)^(k-1) U_2k /
    (2 (2k-1)!); Newton's identities convert those to elementary symmetric
    polynomials whose monic polynomial has the c_j as roots (companion
    matrix).  Non-real or non-positive roots beyond tolerance mean the
    input is not of the product form and the fit reports a violation.
    """
    k_max = table.order_max() // 2
    if k_max < j_max:
        raise ValueError("table too short for requested number of modes")
    p = np.array(
        [(-1.0) ** (k - 1) * table.values[2 * k] / (2.0 * factorial(2 * k - 1)) for k in range(1, j_max + 1)]
    )
    e = np.zeros(j_max + 1)
    e[0] = 1.0
    for k in range(1, j_max + 1):
        acc = 0.0
        for i in range(1, k + 1):
            acc += (-1.0) ** (i - 1) * e[k - i] * p[i - 1]
        e[k] = acc / k
    # roots of x^J - e1 x^(J-1) + e2 x^(J-2) - ...
    poly = np.array([(-1.0) ** j * e[j] for j in range(j_max + 1)])
    roots = np.roots(poly)
    scale = max(abs(p[0]), 1e-30)
    imag_ok = np.all(np.abs(roots.imag) <= tol * max(np.abs(roots).max(), scale))
    c = np.sort(roots.real)[::-1]
    pos_ok = bool(np.all(c > -tol * scale))
    residuals = {}
    for k in range(1, k_max + 1):
        pk_fit = float(np.sum(np.maximum(c, 0.0) ** k))
        pk_true = (-1.0) ** (k - 1) * table.values[2 * k] / (2.0 * factorial(2 * k - 1))
        residuals[2 * k] = pk_true - pk_fit
    if not (imag_ok and pos_ok):
        return LeeYangCoeffs(
            coefficients=c,
            residuals=residuals,
            valid=False,
            message="recovered coefficients are not positive reals: input violates the product form",
        )
    return LeeYangCoeffs(coefficients=c, residuals=residuals, valid=True)


def inequality_suite(table: UrsellTable, u_hat: float, u_hat_err: float = 0.0) -> dict:
    """Check the two factorial bounds on |U_2k| against beta*u_hat.

    |U_2k| <= 2^(1-k) (2k-1)! (beta u)^k           for all k
    |U_2k| <= (2k-1)!/(3 2^(k-1)) (beta u)^(k-2) |U_4|   for k >= 2
    """
    beta = table.beta
    bu = beta * u_hat
    rows = []
    for order in sorted(table.values):
        k = order // 2
        lhs = abs(table.values[order])
        lhs_err = table.sigma(order)
        rhs1 = 2.0 ** (1 - k) * factorial(2 * k - 1) * bu**k
        rhs1_err = 2.0 ** (1 - k) * factorial(2 * k - 1) * k * bu ** max(k - 1, 0) * beta * u_hat_err
        tol1 = 3.0 * (lhs_err + rhs1_err) if table.errors else 1e-12 * max(lhs, rhs1, 1.0)
        rows.append(
            {
                "name": f"factorial_bound_order_{order}",
                "lhs": lhs,
                "rhs": rhs1,
                "margin": rhs1 - lhs,
                "pass": bool(lhs <= rhs1 + tol1),
            }
        )
        if k >= 2 and 4 in table.values:
            u4 = abs(table.values[4])
            rhs2 = factorial(2 * k - 1) / (3.0 * 2.0 ** (k - 1)) * bu ** (k - 2) * u4
            u4_err = table.sigma(4)
            rhs2_err = factorial(2 * k - 1) / (3.0 * 2.0 ** (k - 1)) * (
                bu ** (k - 2) * u4_err + (k - 2) * bu ** max(k - 3, 0) * beta * u_hat_err * u4
            )
            tol2 = 3.0 * (lhs_err + rhs2_err) if table.errors else 1e-12 * max(lhs, rhs2, 1.0)
            rows.append(
                {
                    "name": f"fourth_cumulant_bound_order_{order}",
                    "lhs": lhs,
                    "rhs": rhs2,
                    "margin": rhs2 - lhs,
                    "pass": bool(lhs <= rhs2 + tol2),
                }
            )
    return {
        "beta": beta,
        "u_hat": u_hat,
        "source": table.source,
        "checks": rows,
        "all_passed": all(r["pass"] for r in rows),
    }


@dataclass
class RootLocusReport:
    n_spins: int
    max_re_over_abs: float
    fugacity_moduli: np.ndarray
    passed: bool
    zeros: np.ndarray = field(default=None, repr=False)

    def as_dict(self):
        return {
            "n_spins": self.n_spins,
            "max_re_over_abs": self.max_re_over_abs,
            "pass": bool(self.passed),
        }


def root_locus_check(field_polynomial: np.ndarray, tol: float = 1e-9) -> RootLocusReport:
    """Locate the zeros of the field generating function and test imaginarity.

    The partition function in a uniform field z is exp(-n z) times a degree-n
    polynomial in the fugacity y = exp(2 z); its zeros map to field zeros
    z = log(y)/2, which are purely imaginary exactly when |y| = 1.  Degree
    is the spin count, so companion-matrix root finding is well conditioned
    here (guarded above 24).
    """
    coeffs = np.asarray(field_polynomial, float)
    degree = len(coeffs) - 1
    if degree > 24:
        raise ValueError("fugacity polynomial degree above 24: root finding not trusted")
    if degree < 1:
        raise ValueError("need at least one spin")
    roots = np.roots(coeffs[::-1])
    z = 0.5 * np.log(roots.astype(complex))
    ratio = float(np.max(np.abs(z.real) / np.abs(z)))
    return RootLocusReport(
        n_spins=degree,
        max_re_over_abs=ratio,
        fugacity_moduli=np.abs(roots),
        passed=bool(ratio < tol),
        zeros=z,
    )


def even_polynomial_zsq_roots(zsq_coefficients) -> np.ndarray:
    """Roots (in z) of an even polynomial given by its z^2-coefficients.

    Helper for hand-checkable truncations, e.g. [1, 0.5] -> 1 + z^2/2 with
    zeros at +-i sqrt(2).
    """
    zeta = np.roots(np.asarray(zsq_coefficients, float)[::-1])
    return np.sqrt(zeta.astype(complex))


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=float)
