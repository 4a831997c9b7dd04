"""Reference ("black-box") option pricers.

Each pricer exposes a value(t, z) interface used both for full
re-evaluation of exposures and for nodal evaluations that feed the
Chebyshev interpolation. Supported combinations:

=============  =====================  =========================
option         analytic               COS / binomial
=============  =====================  =========================
EuropeanCall   BSM closed form        COS: BSM, MJD, HSV
DigitalPut     BSM closed form        COS: BSM, MJD, HSV
UpAndOutCall   BSM closed form        --
AmericanPut    --                     binomial CRR (BSM)
=============  =====================  =========================

Pricers are pure and stateless: identical inputs give identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .models import BSM, HSV, MJD, ModelSpec

__all__ = [
    "OptionSpec",
    "PricerHandle",
    "payoff",
    "price_analytic_bsm",
    "delta_analytic_bsm",
    "price_cos",
    "charfn_for",
    "cos_truncation_range",
    "price_binomial_american",
    "exercise_boundary",
    "NO_EXERCISE",
]

KINDS = ("EuropeanCall", "DigitalPut", "UpAndOutCall", "AmericanPut")

#: sentinel returned by exercise_boundary when early exercise is never
#: optimal in the search interval
NO_EXERCISE = float("nan")


@dataclass(frozen=True)
class OptionSpec:
    kind: str
    K: float
    T: float
    B: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown option kind {self.kind!r}")
        if self.K <= 0:
            raise ValueError("strike must be positive")
        if self.T <= 0:
            raise ValueError("maturity must be positive")
        if self.kind == "UpAndOutCall":
            if self.B is None or self.B <= self.K:
                raise ValueError("barrier must exceed the strike")


def payoff(option: OptionSpec, s: np.ndarray | float) -> np.ndarray | float:
    """Terminal payoff as a function of the asset price.

    For the barrier option this is the unmasked payoff (S_T - K)^+; the
    knock-out condition is handled path-wise by the exposure masking.
    """
    s = np.asarray(s, dtype=float)
    if option.kind in ("EuropeanCall", "UpAndOutCall"):
        out = np.maximum(s - option.K, 0.0)
    elif option.kind == "DigitalPut":
        out = (s < option.K).astype(float)
    elif option.kind == "AmericanPut":
        out = np.maximum(option.K - s, 0.0)
    else:  # pragma: no cover
        raise ValueError(option.kind)
    return out if out.ndim else float(out)


# -------------------------------------------------------------------------
# Closed-form Black-Scholes-Merton pricers
# -------------------------------------------------------------------------

def _d1d2(s, K, sigma, r, tau):
    v = sigma * math.sqrt(tau)
    d1 = (math.log(s / K) + (r + 0.5 * sigma**2) * tau) / v
    return d1, d1 - v


def price_analytic_bsm(option: OptionSpec, sigma: float, r: float,
                       t: float, s: float) -> float:
    """Closed-form BSM value at time ``t`` and spot ``s``.

    Rejects ``t >= T``: at expiry the payoff should be used directly.
    """
    if s <= 0:
        raise ValueError("spot must be positive")
    tau = option.T - t
    if tau <= 0:
        raise ValueError("pricer requires t < T; use payoff at expiry")
    if option.kind == "EuropeanCall":
        d1, d2 = _d1d2(s, option.K, sigma, r, tau)
        return s * norm.cdf(d1) - option.K * math.exp(-r * tau) * norm.cdf(d2)
    if option.kind == "DigitalPut":
        # cash-or-nothing put paying 1 on {S_T < K}
        _, d2 = _d1d2(s, option.K, sigma, r, tau)
        return math.exp(-r * tau) * norm.cdf(-d2)
    if option.kind == "UpAndOutCall":
        return _up_and_out_call(s, option.K, option.B, sigma, r, tau)
    raise ValueError(f"no analytic BSM formula for {option.kind}")


def _up_and_out_call(s, K, B, sigma, r, tau):
    """Reflection-principle value of a continuously monitored up-and-out
    call with zero rebate (K < B)."""
    if s >= B:
        return 0.0
    v = sigma * math.sqrt(tau)
    mu_hat = r / sigma**2 - 0.5
    x1 = math.log(s / K) / v + (1 + mu_hat) * v
    x2 = math.log(s / B) / v + (1 + mu_hat) * v
    y1 = math.log(B * B / (s * K)) / v + (1 + mu_hat) * v
    y2 = math.log(B / s) / v + (1 + mu_hat) * v
    df = math.exp(-r * tau)
    pow1 = (B / s) ** (2 * (mu_hat + 1))
    pow2 = (B / s) ** (2 * mu_hat)
    a_term = s * norm.cdf(x1) - K * df * norm.cdf(x1 - v)
    b_term = s * norm.cdf(x2) - K * df * norm.cdf(x2 - v)
    c_term = pow1 * s * norm.cdf(-y1) - pow2 * K * df * norm.cdf(-y1 + v)
    d_term = pow1 * s * norm.cdf(-y2) - pow2 * K * df * norm.cdf(-y2 + v)
    return max(a_term - b_term + c_term - d_term, 0.0)


def delta_analytic_bsm(option: OptionSpec, sigma: float, r: float,
                       t: float, s: float) -> float:
    """Closed-form dV/ds for European call and digital put."""
    tau = option.T - t
    if tau <= 0:
        raise ValueError("delta requires t < T")
    if option.kind == "EuropeanCall":
        d1, _ = _d1d2(s, option.K, sigma, r, tau)
        return float(norm.cdf(d1))
    if option.kind == "DigitalPut":
        _, d2 = _d1d2(s, option.K, sigma, r, tau)
        return float(-math.exp(-r * tau) * norm.pdf(d2) / (s * sigma * math.sqrt(tau)))
    raise ValueError(f"no closed-form delta for {option.kind}")


# -------------------------------------------------------------------------
# COS method (Fourier-cosine expansion)
# -------------------------------------------------------------------------

def charfn_for(model: ModelSpec, tau: float, nu: float | None = None):
    """Risk-neutral characteristic function of the log-return over ``tau``.

    For HSV the function is conditional on the current variance ``nu``
    (defaults to the model's nu0).
    """
    dyn, r = model.dynamics, model.r
    if isinstance(dyn, BSM):
        half_var = 0.5 * dyn.sigma**2 * tau

        def phi(u):
            u = np.asarray(u, dtype=complex)
            return np.exp(1j * u * (r * tau - half_var) - half_var * u * u)
        return phi
    if isinstance(dyn, MJD):
        drift = (r - 0.5 * dyn.sigma**2 - dyn.lam * dyn.jump_mean) * tau

        def phi(u):
            u = np.asarray(u, dtype=complex)
            jump_cf = np.exp(1j * u * dyn.gamma - 0.5 * dyn.delta**2 * u * u) - 1.0
            return np.exp(1j * u * drift - 0.5 * dyn.sigma**2 * tau * u * u
                          + dyn.lam * tau * jump_cf)
        return phi
    if isinstance(dyn, HSV):
        v0 = dyn.nu0 if nu is None else max(float(nu), 0.0)
        if dyn.eta < 1e-8:
            # deterministic-variance limit: integrated variance in closed form
            w = dyn.theta * tau + (v0 - dyn.theta) * (1 - np.exp(-dyn.kappa * tau)) / dyn.kappa

            def phi(u):
                u = np.asarray(u, dtype=complex)
                return np.exp(1j * u * (r * tau - 0.5 * w) - 0.5 * w * u * u)
            return phi
        kappa, theta, eta, rho = dyn.kappa, dyn.theta, dyn.eta, dyn.rho

        def phi(u):
            u = np.asarray(u, dtype=complex)
            beta = kappa - 1j * rho * eta * u
            d = np.sqrt(beta**2 + eta**2 * (1j * u + u * u))
            g = (beta - d) / (beta + d)
            edt = np.exp(-d * tau)
            log_term = np.log((1.0 - g * edt) / (1.0 - g))
            c = 1j * u * r * tau + kappa * theta / eta**2 * ((beta - d) * tau - 2.0 * log_term)
            dd = (beta - d) / eta**2 * (1.0 - edt) / (1.0 - g * edt)
            return np.exp(c + dd * v0)
        return phi
    raise TypeError(f"unsupported dynamics {type(dyn).__name__}")


def _cumulants(model: ModelSpec, tau: float, nu: float | None = None):
    """(c1, c2, c4) of the log-return, used for the COS truncation rule."""
    dyn, r = model.dynamics, model.r
    if isinstance(dyn, BSM):
        return (r - 0.5 * dyn.sigma**2) * tau, dyn.sigma**2 * tau, 0.0
    if isinstance(dyn, MJD):
        c1 = (r - 0.5 * dyn.sigma**2 - dyn.lam * dyn.jump_mean) * tau + dyn.lam * tau * dyn.gamma
        c2 = tau * (dyn.sigma**2 + dyn.lam * (dyn.gamma**2 + dyn.delta**2))
        c4 = dyn.lam * tau * (dyn.gamma**4 + 6 * dyn.gamma**2 * dyn.delta**2
                              + 3 * dyn.delta**4)
        return c1, c2, c4
    if isinstance(dyn, HSV):
        v0 = dyn.nu0 if nu is None else max(float(nu), 0.0)
        kappa, theta, eta, rho = dyn.kappa, dyn.theta, dyn.eta, dyn.rho
        ekt = np.exp(-kappa * tau)
        c1 = r * tau + (1 - ekt) * (theta - v0) / (2 * kappa) - 0.5 * theta * tau
        c2 = (1.0 / (8 * kappa**3)) * (
            eta * tau * kappa * ekt * (v0 - theta) * (8 * kappa * rho - 4 * eta)
            + kappa * rho * eta * (1 - ekt) * (16 * theta - 8 * v0)
            + 2 * theta * kappa * tau * (-4 * kappa * rho * eta + eta**2 + 4 * kappa**2)
            + eta**2 * ((theta - 2 * v0) * np.exp(-2 * kappa * tau)
                        + theta * (6 * ekt - 7) + 2 * v0)
            + 8 * kappa**2 * (v0 - theta) * (1 - ekt))
        return c1, max(c2, 1e-12), 0.0
    raise TypeError(type(dyn).__name__)


def cos_truncation_range(model: ModelSpec, tau: float, width: float = 10.0,
                         nu: float | None = None):
    """Truncation interval [a, b] = c1 -/+ width*sqrt(c2 + sqrt(c4))."""
    c1, c2, c4 = _cumulants(model, tau, nu)
    half = width * math.sqrt(c2 + math.sqrt(c4))
    return c1 - half, c1 + half


def _chi_psi(k, a, b, c, d):
    """Cosine-series integrals of e^x and 1 on [c, d] within [a, b]."""
    ba = b - a
    omega = k * np.pi / ba
    chi = (np.cos(omega * (d - a)) * np.exp(d) - np.cos(omega * (c - a)) * np.exp(c)
           + omega * (np.sin(omega * (d - a)) * np.exp(d)
                      - np.sin(omega * (c - a)) * np.exp(c))) / (1.0 + omega**2)
    psi = np.empty_like(omega)
    nz = omega != 0
    psi[nz] = (np.sin(omega[nz] * (d - a)) - np.sin(omega[nz] * (c - a))) / omega[nz]
    psi[~nz] = d - c
    return chi, psi


def price_cos(option: OptionSpec, charfn, rng_ab: tuple[float, float],
              r: float, t: float, s: float, n_terms: int = 256) -> float:
    """Fourier-cosine price of a European call or digital put.

    ``charfn`` is the log-return characteristic function over the
    remaining life; ``rng_ab`` the truncation interval for the
    normalised log-return x = ln(S_tau / K) - ln(s / K). The call is
    priced as a put plus put-call parity, which is numerically robust
    on wide truncation ranges.
    """
    if option.kind not in ("EuropeanCall", "DigitalPut"):
        raise ValueError(f"COS supports European/digital only, got {option.kind}")
    if n_terms < 16:
        raise ValueError("need at least 16 cosine terms")
    tau = option.T - t
    if tau <= 0:
        raise ValueError("pricer requires t < T")
    K = option.K
    x = math.log(s / K)
    # the truncation interval is given for the log-return; shift it by the
    # log-moneyness so it brackets the terminal log-price ln(S_T / K)
    a, b = rng_ab[0] + x, rng_ab[1] + x
    kink = min(max(0.0, a), b)
    k = np.arange(n_terms)
    omega = k * np.pi / (b - a)
    phi = charfn(omega)
    if not np.all(np.isfinite(phi)):
        raise FloatingPointError("characteristic function returned non-finite values")
    pricing_cf = (phi * np.exp(1j * omega * (x - a))).real
    pricing_cf[0] *= 0.5
    if option.kind == "DigitalPut":
        # payoff 1 on {ln(S_T / K) < 0}
        _, psi = _chi_psi(k, a, b, a, kink)
        v_k = 2.0 / (b - a) * psi
        return float(math.exp(-r * tau) * np.dot(pricing_cf, v_k))
    # European put via COS, call via parity
    chi, psi = _chi_psi(k, a, b, a, kink)
    v_k = 2.0 / (b - a) * K * (psi - chi)
    put = math.exp(-r * tau) * np.dot(pricing_cf, v_k)
    forward = s - K * math.exp(-r * tau)
    return float(put + forward)


# -------------------------------------------------------------------------
# Binomial CRR American put
# -------------------------------------------------------------------------

def price_binomial_american(K: float, sigma: float, r: float, steps: int,
                            t: float, s: float, T: float = 1.0,
                            return_continuation: bool = False):
    """CRR tree value of an American put with exercise at every node."""
    if steps < 64:
        raise ValueError("use at least 64 tree steps")
    tau = T - t
    if tau <= 0:
        raise ValueError("pricer requires t < T")
    dt = tau / steps
    u = math.exp(sigma * math.sqrt(dt))
    d = 1.0 / u
    disc = math.exp(-r * dt)
    p = (math.exp(r * dt) - d) / (u - d)
    if not 0.0 < p < 1.0:
        raise ValueError("tree step too coarse for these parameters")
    j = np.arange(steps + 1)
    prices = s * u ** (steps - 2.0 * j)
    values = np.maximum(K - prices, 0.0)
    cont_root = None
    for level in range(steps - 1, -1, -1):
        values = disc * (p * values[:-1] + (1 - p) * values[1:])
        if level == 0:
            cont_root = float(values[0])
        prices = s * u ** (level - 2.0 * np.arange(level + 1))
        values = np.maximum(values, K - prices)
    value = float(values[0])
    if return_continuation:
        return value, cont_root
    return value


def exercise_boundary(K: float, sigma: float, r: float, t: float, T: float,
                      steps: int = 256, tol: float | None = None,
                      s_lo: float | None = None) -> float:
    """Critical spot s* below which immediate exercise of the American
    put is optimal at time ``t``, located by bisection on the gap
    between continuation value and intrinsic payoff.

    Returns the NO_EXERCISE sentinel (NaN) when the continuation value
    exceeds the payoff everywhere in the search interval.
    """
    if t >= T:
        raise ValueError("boundary requires t < T")
    tol = tol if tol is not None else 1e-6 * K
    lo = s_lo if s_lo is not None else 1e-3 * K
    hi = K

    def gap(s):
        _, cont = price_binomial_american(K, sigma, r, steps, t, s, T,
                                          return_continuation=True)
        return cont - (K - s)

    # require a clearly negative gap at the lower bracket: at r = 0 the
    # continuation value touches the payoff only up to roundoff and early
    # exercise is never optimal
    if gap(lo) >= -1e-9 * K:
        return NO_EXERCISE
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# -------------------------------------------------------------------------
# Unified pricer handle
# -------------------------------------------------------------------------

_SUPPORT = {
    ("EuropeanCall", "analytic"): (BSM,),
    ("DigitalPut", "analytic"): (BSM,),
    ("UpAndOutCall", "analytic"): (BSM,),
    ("EuropeanCall", "cos"): (BSM, MJD, HSV),
    ("DigitalPut", "cos"): (BSM, MJD, HSV),
    ("AmericanPut", "binomial"): (BSM,),
}


@dataclass
class PricerHandle:
    """Bundles a model, an option and a pricing method behind value(t, z).

    ``z`` is a scalar spot for 1D models and an (s, nu) pair for HSV.
    The handle counts its value() calls so that interpolation-node reuse
    can be audited.
    """

    model: ModelSpec
    option: OptionSpec
    method: str = "analytic"
    n_cos: int = 256
    cos_width: float = 10.0
    tree_steps: int = 256
    calls: int = field(default=0, compare=False)

    def __post_init__(self):
        key = (self.option.kind, self.method)
        if key not in _SUPPORT or not isinstance(self.model.dynamics, _SUPPORT[key]):
            raise ValueError(
                f"method {self.method!r} does not support "
                f"{type(self.model.dynamics).__name__} {self.option.kind}")
        if self.method == "cos" and self.n_cos < 16:
            raise ValueError("need at least 16 cosine terms")

    def value(self, t: float, z) -> float:
        self.calls += 1
        dyn = self.model.dynamics
        if self.method == "analytic":
            return price_analytic_bsm(self.option, dyn.sigma, self.model.r, t, float(z))
        if self.method == "cos":
            if isinstance(dyn, HSV):
                s, nu = float(z[0]), float(z[1])
            else:
                s, nu = float(z), None
            tau = self.option.T - t
            phi = charfn_for(self.model, tau, nu)
            ab = cos_truncation_range(self.model, tau, self.cos_width, nu)
            return price_cos(self.option, phi, ab, self.model.r, t, s, self.n_cos)
        if self.method == "binomial":
            return price_binomial_american(self.option.K, dyn.sigma, self.model.r,
                                           self.tree_steps, t, float(z), self.option.T)
        raise ValueError(self.method)  # pragma: no cover

    def delta(self, t: float, z) -> float:
        """dV/ds: closed form where available, else central differences."""
        dyn = self.model.dynamics
        if self.method == "analytic" and self.option.kind in ("EuropeanCall", "DigitalPut"):
            return delta_analytic_bsm(self.option, dyn.sigma, self.model.r, t, float(z))
        s = float(z if not isinstance(dyn, HSV) else z[0])
        h = 1e-3 * s
        if isinstance(dyn, HSV):
            zp, zm = (s + h, float(z[1])), (s - h, float(z[1]))
        else:
            zp, zm = s + h, s - h
        return (self.value(t, zp) - self.value(t, zm)) / (2 * h)
