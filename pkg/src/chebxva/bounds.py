"""Error-bound evaluation, planning utilities, and the tractable
two-digital-options example.

Everything here is diagnostic: quadrature-based evaluations of the
theoretical bounds, a parameter planner turning target accuracies into
(domain size, degree, sample size) triples, and empirical coverage
checks of the finite-sample inequalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .exposure import MeasureSpec, measure_generic, measure_weights

__all__ = [
    "PlannerInput",
    "PlannerInfeasibleError",
    "plan_parameters",
    "uniform_gap",
    "GapReport",
    "digital_example",
    "digital_risk_factor",
    "digital_value_u",
    "digital_value_v",
    "lp_bound_eval",
    "finite_sample_bound_check",
]

QUAD_TOL = 1e-8


class PlannerInfeasibleError(ValueError):
    """Planner formulas have no admissible solution for these inputs."""


@dataclass(frozen=True)
class PlannerInput:
    """Scalars of the accuracy-planning formulas.

    (alpha, beta, gamma) are the domain-tail constants, (a, b, theta)
    the interpolation-convergence constants, c the stability constant,
    sigma_bar the pricer-noise bound, kappa the confidence scale and
    sigma_rho the estimator-stdev scale; xi is the sorting-effort
    constant, accepted for completeness but unused by the formulas.
    """

    n: int
    kappa: float
    sigma_rho: float
    alpha: float
    beta: float
    gamma: float
    a: float
    b: float
    theta: float
    c: float
    D: int = 1
    sigma_bar: float = 1.0
    xi: float = 1.0

    def __post_init__(self):
        if min(self.n, self.kappa, self.sigma_rho, self.alpha, self.beta,
               self.gamma, self.a, self.b, self.c, self.sigma_bar) <= 0:
            raise ValueError("planner inputs must be positive")
        if self.theta < 2:
            raise ValueError("theta must be at least 2")
        if self.D < 1:
            raise ValueError("dimension must be at least 1")


def plan_parameters(inp: PlannerInput) -> dict:
    """Domain size L, degree N and sample size M:

        L = ((ln n + ln alpha + kappa^2/(18 sigma_rho^2)) / beta)^{1/gamma}
        N = ceil(L^theta - ln(kappa / (3 a sqrt(n))) / b)^D
        M = ceil(n c^2 (1 + ln N)^2 sigma_bar^2
                 (18 ln N / kappa^2 + sigma_rho^{-2}))
    """
    arg = (math.log(inp.n) + math.log(inp.alpha)
           + inp.kappa**2 / (18.0 * inp.sigma_rho**2)) / inp.beta
    if arg <= 0:
        raise PlannerInfeasibleError(f"nonpositive L-argument {arg:.3e}")
    L = arg ** (1.0 / inp.gamma)
    base = L**inp.theta - math.log(inp.kappa / (3.0 * inp.a * math.sqrt(inp.n))) / inp.b
    if base <= 0:
        raise PlannerInfeasibleError(f"nonpositive degree argument {base:.3e}")
    N = math.ceil(base) ** inp.D
    ln_n_cheb = math.log(N)
    if ln_n_cheb <= 0:
        raise PlannerInfeasibleError("degree too small for the sample-size formula")
    M = math.ceil(inp.n * inp.c**2 * (1.0 + ln_n_cheb) ** 2 * inp.sigma_bar**2
                  * (18.0 * ln_n_cheb / inp.kappa**2 + inp.sigma_rho ** (-2)))
    return {"L": L, "N": N, "M": M}


@dataclass(frozen=True)
class GapReport:
    gap: float
    n_grid: int
    arg_max: float


def uniform_gap(V, U, domain, n_grid: int = 100_000) -> GapReport:
    """max |V - U| on a dense grid over ``domain`` = (a, b); reported
    with the grid density since the true sup is unverifiable numerically."""
    a, b = domain
    grid = np.linspace(a, b, n_grid)
    diff = np.abs(np.asarray(V(grid)) - np.asarray(U(grid)))
    k = int(np.argmax(diff))
    return GapReport(gap=float(diff[k]), n_grid=n_grid, arg_max=float(grid[k]))


# -------------------------------------------------------------------------
# The tractable two-digital-options example
# -------------------------------------------------------------------------

_DIG_SIGMA = 0.05
_DIG_T = 1.0 / 24.0
_DIG_TAU = 1.0 / 24.0
_DIG_K1 = 0.03
_DIG_K2 = 0.04


def _dig_d(z, k):
    return (z - k - 0.5 * _DIG_SIGMA**2 * _DIG_TAU) / (_DIG_SIGMA * math.sqrt(_DIG_TAU))


def digital_value_v(z):
    """Value function of the first digital call (log-strike 0.03)."""
    return norm.cdf(_dig_d(np.asarray(z, dtype=float), _DIG_K1))


def digital_value_u(z):
    """Value function of the second digital call (log-strike 0.04)."""
    return norm.cdf(_dig_d(np.asarray(z, dtype=float), _DIG_K2))


def digital_risk_factor():
    """The normal risk factor Z ~ N(-sigma^2 t / 2, sigma^2 t)."""
    return norm(loc=-0.5 * _DIG_SIGMA**2 * _DIG_T,
                scale=_DIG_SIGMA * math.sqrt(_DIG_T))


def digital_example(alpha: float = 0.99) -> dict:
    """Semi-analytic exposure measurements of the two digital options.

    Both value functions are strictly increasing, so PFE_a(X) =
    V(Q_Z(a)); CES follows by quadrature of the quantile function, and
    the L2 distance by adaptive quadrature over the real line.
    """
    Z = digital_risk_factor()

    def pfe(fn):
        return float(fn(Z.ppf(alpha)))

    def ces(fn):
        val, err = integrate.quad(lambda u: fn(Z.ppf(u)), alpha, 1.0,
                                  epsabs=QUAD_TOL, limit=200)
        if not np.isfinite(val):
            raise ArithmeticError("CES quadrature failed to converge")
        return float(val / (1.0 - alpha))

    lo, hi = Z.mean() - 1.0, Z.mean() + 1.0
    l2_sq, err = integrate.quad(
        lambda z: (digital_value_v(z) - digital_value_u(z)) ** 2,
        lo, hi, epsabs=QUAD_TOL, limit=400)
    if err > 1e-6:
        raise ArithmeticError("L2 quadrature failed to converge")
    l2 = math.sqrt(l2_sq)

    out = {
        "pfe_x": pfe(digital_value_v),
        "ces_x": ces(digital_value_v),
        "pfe_y": pfe(digital_value_u),
        "ces_y": ces(digital_value_u),
        "l2_distance": l2,
        "alpha": alpha,
    }
    out["pfe_gap_over_4_l2"] = abs(out["pfe_x"] - out["pfe_y"]) > 4.0 * l2
    out["ces_gap_over_5_l2"] = abs(out["ces_x"] - out["ces_y"]) > 5.0 * l2
    return out


# -------------------------------------------------------------------------
# L^p bound and finite-sample bound checks
# -------------------------------------------------------------------------

def _lp_norm(fn, lo, hi, p):
    val, _ = integrate.quad(lambda z: np.abs(fn(z)) ** p, lo, hi,
                            epsabs=QUAD_TOL, limit=400)
    return val ** (1.0 / p)


def _conjugate(e: float) -> float:
    if e == 1.0:
        return math.inf
    return e / (e - 1.0)


def lp_bound_eval(V, U, z_dist, f_m, p: float, r: float, q: float,
                  z_range=None, grid: int = 100_000,
                  monotone: bool = True) -> dict:
    """Evaluate the quantile-measure error bound

        |rho_m(X) - rho_m(Y)| <= ||V - U||_{L^p} ||f_Z||_{L^{q'}}^{1/r}
                                 ||f_m||_{L^{r'}(0,1)},

    for p = r q, alongside the measured gap (by quadrature of the
    quantile functions; requires monotone value functions). Infinite
    norm factors flag the bound as vacuous.
    """
    if abs(p - r * q) > 1e-12:
        raise ValueError("exponents must satisfy p = r q")
    if z_range is None:
        z_range = (z_dist.ppf(1e-12), z_dist.ppf(1.0 - 1e-12))
    lo, hi = z_range

    norm_vu = _lp_norm(lambda z: V(z) - U(z), lo, hi, p)

    qp = _conjugate(q)
    if math.isinf(qp):
        zs = np.linspace(lo, hi, grid)
        norm_fz = float(np.max(z_dist.pdf(zs)))
    else:
        norm_fz = _lp_norm(z_dist.pdf, lo, hi, qp)

    rp = _conjugate(r)
    if math.isinf(rp):
        us = np.linspace(1e-9, 1.0 - 1e-9, grid)
        norm_fm = float(np.max(f_m(us)))
    else:
        norm_fm = _lp_norm(f_m, 1e-12, 1.0 - 1e-12, rp)

    bound = norm_vu * norm_fz ** (1.0 / r) * norm_fm
    vacuous = not np.isfinite(bound)

    measured = np.nan
    if monotone:
        def gap_u(u):
            z = z_dist.ppf(u)
            return (max(V(z), 0.0) - max(U(z), 0.0)) * f_m(u)
        g, _ = integrate.quad(gap_u, 1e-12, 1.0 - 1e-12,
                              epsabs=QUAD_TOL, limit=400)
        measured = abs(g)

    return {"bound": bound, "measured": measured, "vacuous": vacuous,
            "lp_norm": norm_vu, "fz_norm": norm_fz, "fm_norm": norm_fm}


def finite_sample_bound_check(V, U, z_dist, n: int, p: float, eta: float,
                              trials: int = 500,
                              spec: MeasureSpec | None = None,
                              f_m=None, q: float | None = None,
                              variant: str = "a", seed: int = 0,
                              z_range=None) -> dict:
    """Empirical coverage of the finite-sample bounds.

    Variant (a): |rho^(X) - rho^(Y)| <= (||f_Z||_inf / eta)^{1/p}
    n^{1/p} ||V - U||_{L^p}, any law-invariant measure. Variant (b)
    adds the mixing density: ||f_m||_{L^q} ||f_Z||_inf^{1/p} ||V-U||_{L^p}
    + (-ln(eta)/n)^{1/(2p)} ||f_m||_{L^q} ||V-U||_inf, with 1/p + 1/q = 1.

    Returns the violation frequency over ``trials`` i.i.d. samples of
    size n; it should not exceed eta plus Bernoulli noise.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if spec is None:
        spec = MeasureSpec("CES", alpha=0.95)
    if z_range is None:
        z_range = (z_dist.ppf(1e-12), z_dist.ppf(1.0 - 1e-12))
    lo, hi = z_range

    norm_vu = _lp_norm(lambda z: V(z) - U(z), lo, hi, p)
    zs = np.linspace(lo, hi, 100_000)
    fz_sup = float(np.max(z_dist.pdf(zs)))

    if variant == "a":
        bound = (fz_sup / eta) ** (1.0 / p) * n ** (1.0 / p) * norm_vu
    elif variant == "b":
        if f_m is None or q is None:
            raise ValueError("variant (b) needs f_m and q")
        fm_norm = _lp_norm(f_m, 1e-12, 1.0 - 1e-12, q)
        sup_vu = uniform_gap(V, U, (lo, hi)).gap
        bound = (fm_norm * fz_sup ** (1.0 / p) * norm_vu
                 + (-math.log(eta) / n) ** (1.0 / (2.0 * p)) * fm_norm * sup_vu)
    else:
        raise ValueError(variant)

    rng = np.random.default_rng(seed)
    w = measure_weights(spec, n)
    violations = 0
    for _ in range(trials):
        z = z_dist.ppf(rng.uniform(size=n))
        x = np.maximum(np.asarray(V(z), dtype=float), 0.0)
        y = np.maximum(np.asarray(U(z), dtype=float), 0.0)
        gap = abs(measure_generic(x, w) - measure_generic(y, w))
        if gap > bound:
            violations += 1
    rate = violations / trials
    return {"violation_rate": rate, "bound": bound, "eta": eta,
            "trials": trials, "n": n,
            "slack": 2.0 * math.sqrt(eta * (1.0 - eta) / trials)}
