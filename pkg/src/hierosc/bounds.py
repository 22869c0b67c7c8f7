"""Deterministic recurrence-bound machinery for the level flow.

The integrated two-point value u and the four-point statistic x obey, level
to level, the one-sided recurrences

    u_n <= sigma(u_{n-1}) u_{n-1}
    u_n >= sigma(u_{n-1}) u_{n-1} - psi(u_{n-1}) x_{n-1}
    x_n <= phi(u_{n-1}) x_{n-1}

valid while u_{n-1} (1 - kappa^-delta) < 1.  sigma fixes u = 1; above it
the upper trajectory is repelled and eventually leaves the admissible
domain, below it u decays geometrically with asymptotic rate kappa^-delta.
The epsilon-window (v_bar, w_bar) marks the region where the induction
traps the true sequence: sigma(v_bar) = kappa^epsilon and the endpoint
identity -psi(v_bar) w_bar + v_bar sigma(v_bar) = v_bar holds exactly.

Bracket semantics (documented because bounds are one-sided): decay is
certified only by the upper trajectory falling below 1, which pins every
certified lower edge at the level-0 crossing; escape at horizon n is
flagged when the lower trajectory clears v_bar or the upper trajectory
leaves the sigma domain.  Deep horizons shrink the escape edge onto the
infimum of the always-in-window set, the numerical counterpart of the
minimal critical point; the stricter lower-trajectory-only edge is also
reported per level since only it bounds the true escape threshold when x
is not small.

Arithmetic: doubles with a documented 1e-12 slack on strict inequalities;
upper recurrences are inflated by (1 + 1e-14) per step as cheap directed
rounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from math import factorial
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Kernels",
    "EpsilonWindow",
    "BoundTrace",
    "BetaBrackets",
    "kernel_functions",
    "epsilon_window",
    "recurrence_step",
    "propagate_and_classify",
    "find_beta_brackets",
    "select_parameters",
    "predicted_limit",
    "decay_envelope_constant",
]

STRICT_SLACK = 1e-12
UPPER_INFLATION = 1.0 + 1e-14


@dataclass(frozen=True)
class Kernels:
    kappa: int
    delta: float

    @property
    def contraction(self) -> float:
        return float(self.kappa) ** (-self.delta)

    @property
    def domain_max(self) -> float:
        return 1.0 / (1.0 - self.contraction)

    def sigma(self, v: float) -> float:
        c = self.contraction
        if not 0.0 < v < self.domain_max:
            raise ValueError(f"v={v} outside the kernel domain (0, {self.domain_max})")
        return c / (1.0 - (1.0 - c) * v)

    def phi(self, v: float) -> float:
        return float(self.kappa) ** (2.0 * self.delta - 1.0) * self.sigma(v) ** 4

    def psi(self, v: float) -> float:
        c = self.contraction
        return 0.5 * float(self.kappa) ** (2.0 * self.delta - 1.0) * (1.0 - c) * self.sigma(v) ** 3


def kernel_functions(v: float, kappa: int, delta: float):
    """(sigma, phi, psi) at v; domain error outside (0, 1/(1-kappa^-delta))."""
    k = Kernels(kappa, delta)
    return k.sigma(v), k.phi(v), k.psi(v)


@dataclass(frozen=True)
class EpsilonWindow:
    epsilon: float
    v_bar: float
    w_bar: float
    w_max: float
    kappa: int
    delta: float

    def contraction_exponent(self) -> float:
        # phi on [1, v_bar] is at most kappa^(2 delta + 4 eps - 1) < 1
        return 2.0 * self.delta + 4.0 * self.epsilon - 1.0


def _w_of_eps(kappa: int, delta: float, eps: float) -> float:
    k = float(kappa)
    num = (k**delta - k**-eps) * (1.0 - k**-eps)
    return 2.0 * k ** (1.0 - delta - 2.0 * eps) * num / (k**delta - 1.0) ** 2


def epsilon_window(kappa: int, delta: float, epsilon: float, grid: int = 1000) -> EpsilonWindow:
    """Window thresholds v(eps), w(eps) plus the supremum of w over admissible eps.

    w_max comes from a grid scan refined by golden-section (the supremum may
    sit at the open right edge, where the scan simply reports the best
    admissible value).
    """
    eps_max = (1.0 - 2.0 * delta) / 4.0
    if not 0.0 < epsilon < eps_max:
        raise ValueError(f"epsilon must lie in (0, {eps_max})")
    k = float(kappa)
    v_bar = (k**delta - k**-epsilon) / (k**delta - 1.0)
    w_bar = _w_of_eps(kappa, delta, epsilon)

    lo, hi = eps_max * 1e-6, eps_max * (1.0 - 1e-9)
    grid_eps = np.linspace(lo, hi, grid)
    grid_w = np.array([_w_of_eps(kappa, delta, e) for e in grid_eps])
    i = int(np.argmax(grid_w))
    a = grid_eps[max(i - 1, 0)]
    b = grid_eps[min(i + 1, grid - 1)]
    inv_golden = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - inv_golden * (b - a)
    x2 = a + inv_golden * (b - a)
    f1, f2 = _w_of_eps(kappa, delta, x1), _w_of_eps(kappa, delta, x2)
    for _ in range(80):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_golden * (b - a)
            f2 = _w_of_eps(kappa, delta, x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_golden * (b - a)
            f1 = _w_of_eps(kappa, delta, x1)
    w_max = max(float(grid_w.max()), f1, f2)
    return EpsilonWindow(epsilon=epsilon, v_bar=v_bar, w_bar=w_bar, w_max=w_max, kappa=kappa, delta=delta)


def window_identity_residual(win: EpsilonWindow) -> float:
    """-psi(v_bar) w_bar + v_bar sigma(v_bar) - v_bar (zero in exact arithmetic)."""
    k = Kernels(win.kappa, win.delta)
    return -k.psi(win.v_bar) * win.w_bar + win.v_bar * k.sigma(win.v_bar) - win.v_bar


def recurrence_step(u_lo: float, u_hi: float, x_hi: float, kernels: Kernels):
    """One level of interval propagation; returns (u_lo, u_hi, x_hi, in_domain).

    Monotonicity of sigma(v) v and psi justifies endpoint evaluation.  A
    domain violation (u_hi at or past the sigma pole) returns in_domain =
    False with inputs unchanged; callers classify, they do not crash.
    """
    c = kernels.contraction
    if u_hi * (1.0 - c) >= 1.0:
        return u_lo, u_hi, x_hi, False
    s_hi = kernels.sigma(u_hi)
    new_hi = s_hi * u_hi * UPPER_INFLATION
    new_lo = kernels.sigma(max(u_lo, 1e-300)) * u_lo - kernels.psi(u_hi) * x_hi * UPPER_INFLATION
    new_x = kernels.phi(u_hi) * x_hi * UPPER_INFLATION
    return new_lo, new_hi, new_x, True


@dataclass
class BoundTrace:
    levels: list  # dicts: level, u_lo, u_hi, x_hi, label
    classification: str  # decaying | escaped-above | window | indeterminate
    decisive_level: Optional[int]

    def column(self, key):
        return np.array([lv[key] for lv in self.levels])


def propagate_and_classify(
    u0_lo: float,
    u0_hi: float,
    x0: float,
    kernels: Kernels,
    window: EpsilonWindow,
    n_max: int,
    escape_rule: str = "spec",
) -> BoundTrace:
    """Iterate the interval recurrence and label each level.

    Labels: ``decaying`` (u_hi < 1, decisive), ``escaped-above`` (decisive;
    with escape_rule='spec' this fires on u_lo > v_bar or a domain
    violation, with 'certified' only on u_lo > v_bar), ``window`` (interval
    inside (1, v_bar) and x < w_bar), else ``indeterminate``.  Overall
    classification is the first decisive label, or ``window`` if every
    level stayed windowed.
    """
    if escape_rule not in ("spec", "certified"):
        raise ValueError("escape_rule must be 'spec' or 'certified'")
    u_lo, u_hi, x = float(u0_lo), float(u0_hi), float(x0)
    levels = []
    classification = None
    decisive = None
    all_window = True
    for n in range(n_max + 1):
        if u_hi < 1.0 - STRICT_SLACK:
            label = "decaying"
        elif u_lo > window.v_bar + STRICT_SLACK:
            label = "escaped-above"
        elif 1.0 + STRICT_SLACK < u_lo and u_hi < window.v_bar - STRICT_SLACK and x < window.w_bar:
            label = "window"
        else:
            label = "indeterminate"
        levels.append({"level": n, "u_lo": u_lo, "u_hi": u_hi, "x_hi": x, "label": label})
        if label in ("decaying", "escaped-above"):
            classification = label
            decisive = n
            break
        if label != "window":
            all_window = False
        if n == n_max:
            break
        u_lo, u_hi, x, ok = recurrence_step(u_lo, u_hi, x, kernels)
        if not ok:
            levels.append(
                {"level": n + 1, "u_lo": u_lo, "u_hi": u_hi, "x_hi": x, "label": "domain-violated"}
            )
            classification = "escaped-above" if escape_rule == "spec" else "indeterminate"
            decisive = n + 1
            break
    if classification is None:
        classification = "window" if all_window else "indeterminate"
    return BoundTrace(levels=levels, classification=classification, decisive_level=decisive)


def decay_envelope_constant(u0: float, kernels: Kernels, n_terms: int = 200) -> float:
    """K with u_n <= K kappa^(-n delta) for the pure upper map from u0 < 1.

    The envelope constant is u0 times the convergent product of
    (1 - (1-kappa^-delta) u_k)^{-1} along the decaying trajectory.
    """
    if u0 >= 1.0:
        raise ValueError("decay envelope requires u0 < 1")
    c = kernels.contraction
    u = u0
    log_prod = 0.0
    for _ in range(n_terms):
        log_prod -= math.log1p(-(1.0 - c) * u)
        u = kernels.sigma(u) * u
        if u < 1e-280:
            break
    return u0 * math.exp(log_prod)


@dataclass
class BetaBrackets:
    """Nested level brackets plus the deep-horizon critical bracket.

    beta_minus[n], beta_plus[n] follow the spec escape rule; the
    certified_plus list uses the lower-trajectory-only rule.  The critical
    bracket (beta_star_lo, beta_star_hi) encloses the infimum of the
    deep-horizon window set to the bisection tolerance; candidate-crossing
    ambiguity (a non-monotone u0(beta) with multiple crossings in the
    scanned range) is flagged, not resolved.
    """

    beta_minus: list
    beta_plus: list
    certified_plus: list
    beta_star_lo: float
    beta_star_hi: float
    ambiguous_crossings: bool
    n_levels: int
    deep_horizon: int

    def as_dict(self):
        return {
            "beta_minus": self.beta_minus,
            "beta_plus": self.beta_plus,
            "certified_plus": self.certified_plus,
            "beta_star": [self.beta_star_lo, self.beta_star_hi],
            "relative_width": (self.beta_star_hi - self.beta_star_lo) / self.beta_star_hi,
            "ambiguous_crossings": self.ambiguous_crossings,
            "n_levels": self.n_levels,
            "deep_horizon": self.deep_horizon,
        }


class BracketNotFound(RuntimeError):
    """No sign change in the scanned beta range: criticality hypotheses unmet."""


def _bisect(predicate: Callable[[float], bool], lo: float, hi: float, rel_tol: float):
    # expects predicate False at lo, True at hi; degenerate endpoints are
    # returned as a zero-width bracket rather than bisecting noise
    if predicate(lo):
        return lo, lo
    if not predicate(hi):
        return hi, hi
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


def find_beta_brackets(
    u0_of_beta: Callable[[float], float],
    x0_of_beta: Callable[[float], float],
    kernels: Kernels,
    window: EpsilonWindow,
    beta_lo: float,
    beta_hi: float,
    tol: float = 1e-5,
    n_levels: int = 12,
    deep_horizon: int = 96,
    scan_points: int = 64,
) -> BetaBrackets:
    """Locate the level-crossing brackets and the deep-horizon critical bracket.

    u0_of_beta must be continuous on [beta_lo, beta_hi] and cross both 1 and
    v_bar there (BracketNotFound otherwise).
    """
    grid = np.linspace(beta_lo, beta_hi, scan_points)
    u_grid = np.array([u0_of_beta(b) for b in grid])
    if u_grid[0] >= 1.0 or u_grid.max() <= window.v_bar:
        raise BracketNotFound(
            f"u0 spans [{u_grid[0]:.4g}, {u_grid.max():.4g}] on the given range; "
            "needs to cross 1 and v_bar"
        )
    crossings_one = int(np.sum(np.diff(u_grid >= 1.0) != 0))
    ambiguous = crossings_one > 1

    def classify(beta: float, horizon: int, rule: str) -> str:
        u0 = u0_of_beta(beta)
        x0 = max(x0_of_beta(beta), 0.0)
        return propagate_and_classify(u0, u0, x0, kernels, window, horizon, escape_rule=rule).classification

    beta_minus, beta_plus, certified_plus = [], [], []
    lo0, hi0 = _bisect(lambda b: u0_of_beta(b) >= 1.0, beta_lo, beta_hi, tol)
    b0_minus = 0.5 * (lo0 + hi0)
    lo0, hi0 = _bisect(lambda b: u0_of_beta(b) >= window.v_bar, beta_lo, beta_hi, tol)
    b0_plus = 0.5 * (lo0 + hi0)
    beta_minus.append(b0_minus)
    beta_plus.append(b0_plus)
    certified_plus.append(b0_plus)

    for n in range(1, n_levels + 1):
        lo, hi = _bisect(
            lambda b, n=n: not (classify(b, n, "spec") == "decaying"), beta_lo, beta_hi, tol
        )
        beta_minus.append(min(0.5 * (lo + hi), beta_plus[-1]))
        lo, hi = _bisect(lambda b, n=n: classify(b, n, "spec") == "escaped-above", beta_minus[0] * 0.5, beta_plus[-1], tol)
        beta_plus.append(0.5 * (lo + hi))
        lo, hi = _bisect(
            lambda b, n=n: classify(b, n, "certified") == "escaped-above", beta_minus[0] * 0.5, certified_plus[-1], tol
        )
        certified_plus.append(0.5 * (lo + hi))

    # enforce and check nesting (monotone clip; violations signal noise in callables)
    for n in range(1, len(beta_plus)):
        beta_plus[n] = min(beta_plus[n], beta_plus[n - 1])
        beta_minus[n] = max(beta_minus[n], beta_minus[n - 1])
        certified_plus[n] = min(certified_plus[n], certified_plus[n - 1])

    # deep bracket: last beta that decays, first beta that escapes, at the deep horizon
    dec_lo, dec_hi = _bisect(
        lambda b: classify(b, deep_horizon, "spec") != "decaying", beta_lo, beta_plus[0], tol
    )
    esc_lo, esc_hi = _bisect(
        lambda b: classify(b, deep_horizon, "spec") == "escaped-above", dec_lo, beta_plus[0], tol
    )
    return BetaBrackets(
        beta_minus=beta_minus,
        beta_plus=beta_plus,
        certified_plus=certified_plus,
        beta_star_lo=dec_lo,
        beta_star_hi=esc_hi,
        ambiguous_crossings=ambiguous,
        n_levels=n_levels,
        deep_horizon=deep_horizon,
    )


def predicted_limit(k: int, beta_star: float) -> float:
    """Critical limit of the 2k-point function: (2k)!/(k! 2^k beta*^k)."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if beta_star <= 0.0:
        raise ValueError("beta_star must be positive")
    return factorial(2 * k) / (factorial(k) * 2.0**k * beta_star**k)


@dataclass
class SelectionCertificate:
    params: dict
    checks: list
    feasible: bool

    def as_dict(self):
        return {"params": self.params, "checks": self.checks, "feasible": self.feasible}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)


def select_parameters(
    kappa: int,
    delta: float,
    epsilon: float,
    gamma: float = 30.0,
    mass: Optional[float] = None,
    margin: float = 2.0,
    b_start: float = 0.1,
    b_floor: float = 1e-8,
    beta_scan: tuple = (0.02, 10.0),
) -> SelectionCertificate:
    """Pick (mass, a, b) satisfying the window hypotheses, with a certificate.

    mass defaults to margin * 36 v_bar / gamma^2 (the well-shape
    inequality with the requested margin).  b is halved until the
    displayed four-point bound 24 b u0^4 / f(3 beta/(mass gamma)),
    evaluated at the upper crossing where u0 = v_bar, drops below w_bar;.
    the certificate also reports the dimensionally corrected bound (an
    extra 1/beta) and the actual spectral four-point value, whose
    comparison against w_bar is recorded as the true-window flag rather
    than asserted.
    """
    from .numerics import relaxation_factor
    from .spectral import ModelParams, build_and_diagonalize, eta_and_rigidity, u_hat, x_fourpoint

    window = epsilon_window(kappa, delta, epsilon)
    v_bar, w_bar = window.v_bar, window.w_bar
    need = 36.0 * v_bar
    mass_val = margin * need / gamma**2 if mass is None else mass
    checks = [
        {
            "name": "well_shape_margin",
            "lhs": need,
            "rhs": mass_val * gamma**2,
            "pass": bool(mass_val * gamma**2 > need * (margin * 0.999 if mass is None else 1.0)),
        }
    ]

    b = b_start
    chosen = None
    while b >= b_floor:
        a = -gamma * b
        params = ModelParams(mass=mass_val, a=a, b=b, beta=1.0)
        try:
            sol = build_and_diagonalize(params)
        except Exception as exc:  # truncation failure at this b: shrink and retry
            checks.append({"name": f"spectral_solve_b={b:.3g}", "error": str(exc), "pass": False})
            b *= 0.5
            continue

        def u0f(beta):
            return u_hat(sol, beta, 0.0)

        lo, hi = beta_scan
        if u0f(hi) <= v_bar or u0f(lo) >= 1.0:
            b *= 0.5
            continue
        blo, bhi = lo, hi
        while bhi - blo > 1e-10 * bhi:
            mid = 0.5 * (blo + bhi)
            if u0f(mid) < v_bar:
                blo = mid
            else:
                bhi = mid
        beta_plus = 0.5 * (blo + bhi)
        f_val = relaxation_factor(3.0 * beta_plus / (mass_val * gamma))
        displayed_bound = 24.0 * b * v_bar**4 / f_val
        if displayed_bound < w_bar:
            eta, gap, rigidity, suppressed = eta_and_rigidity(sol, beta_plus)
            x_actual = x_fourpoint(sol, beta_plus)
            checks.extend(
                [
                    {
                        "name": "x0_displayed_bound_below_w_bar",
                        "lhs": displayed_bound,
                        "rhs": w_bar,
                        "pass": True,
                    },
                    {
                        "name": "x0_corrected_bound",
                        "lhs": displayed_bound / beta_plus,
                        "rhs": w_bar,
                        "pass": bool(displayed_bound / beta_plus < w_bar),
                    },
                    {
                        "name": "x0_actual_window_hypothesis",
                        "lhs": x_actual,
                        "rhs": w_bar,
                        "pass": bool(x_actual < w_bar),
                    },
                    {"name": "rigidity_veto", "lhs": rigidity, "rhs": 1.0, "pass": bool(rigidity < 1.0)},
                    {"name": "b_above_floor", "lhs": b_floor, "rhs": b, "pass": True},
                ]
            )
            chosen = {
                "kappa": kappa,
                "delta": delta,
                "epsilon": epsilon,
                "v_bar": v_bar,
                "w_bar": w_bar,
                "mass": mass_val,
                "a": a,
                "b": b,
                "gamma": gamma,
                "beta_plus_estimate": beta_plus,
                "x0_actual_at_beta_plus": x_actual,
            }
            break
        b *= 0.5

    if chosen is None:
        checks.append({"name": "b_above_floor", "lhs": b_floor, "rhs": b, "pass": False})
        return SelectionCertificate(params={}, checks=checks, feasible=False)
    hard = [c for c in checks if c["name"] in ("well_shape_margin", "x0_displayed_bound_below_w_bar", "rigidity_veto", "b_above_floor")]
    return SelectionCertificate(params=chosen, checks=checks, feasible=all(c["pass"] for c in hard))
