"""Sensitivity-based counterparty-risk applications.

CVA delta via path-wise derivatives, ISDA sensitivity-based initial
margin from a first-order P&L approximation, and the resulting margin
valuation adjustment. Deltas at the final grid time fall back to the
known payoff derivative, matching the terminal-payoff rule of the
exposure engine.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .models import MJD, BSM, HSV, ModelSpec, PathSet, TimeGrid, _path_generators
from .pricing import OptionSpec, PricerHandle

__all__ = [
    "PDCurve",
    "FundingSpread",
    "cva_delta_mc",
    "isda_im",
    "mva_isda",
    "conditional_step",
    "make_delta_analytic",
    "make_delta_chebyshev",
]

MPOR_DEFAULT = 10.0 / 252.0   # ten-business-day margin period of risk
INNER_PATHS_DEFAULT = 1000


@dataclass(frozen=True)
class PDCurve:
    """Counterparty default probability before time t; uniform on [0, T]
    by default."""

    horizon: float
    variant: str = "uniform"

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    def __call__(self, t: float) -> float:
        if self.variant == "uniform":
            return min(max(t / self.horizon, 0.0), 1.0)
        if self.variant == "none":
            return 0.0
        raise ValueError(self.variant)


@dataclass(frozen=True)
class FundingSpread:
    """Funding spread FS(t); constant 0.01 by default."""

    level: float = 0.01

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("funding spread must be nonnegative")

    def __call__(self, t: float) -> float:
        return self.level


def cva_delta_mc(paths: PathSet, delta_fn, pd: PDCurve, r: float,
                 return_per_path: bool = False):
    """Path-wise CVA delta estimate

        1/n sum_u e^{-r t_u} (PD(t_u) - PD(t_{u-1}))
                 sum_i V'_{t_u}(s^i_{t_u}) s^i_{t_u} / s0.

    ``delta_fn(u, s)`` supplies V'_{t_u} (analytic or the derivative of
    a fitted Chebyshev interpolant) at the spots ``s`` (vectorized).
    """
    if paths.dim != 1:
        raise ValueError("CVA delta supports single-underlying models only")
    n = paths.n
    m = paths.grid.steps
    times = paths.grid.times
    s0 = float(paths.states[0, 0, 0])
    per_path = np.zeros(n)
    for u in range(1, m + 1):
        dpd = pd(times[u]) - pd(times[u - 1])
        if dpd == 0.0:
            continue
        s = paths.prices(u)
        deltas = np.asarray(delta_fn(u, s), dtype=float)
        per_path += np.exp(-r * times[u]) * dpd * deltas * (s / s0)
    if return_per_path:
        return float(per_path.mean()), per_path
    return float(per_path.mean())


def isda_im(states, inner, deltas, alpha: float = 0.99):
    """Per-outer-path ISDA initial margin.

    The first-order P&L sample is Delta~^{ij} = V'(z^i) (z^{ij} - z^i);
    the IM is its empirical alpha-quantile (order statistic floor(p a)+1).
    Returns (im, clamped) where ``clamped`` flags p < 1/(1-alpha), in
    which case the quantile index clamps to the sample maximum.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    states = np.asarray(states, dtype=float)
    inner = np.asarray(inner, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    p = inner.shape[1]
    pl = deltas[:, None] * (inner - states[:, None])
    idx = int(np.floor(p * alpha))
    clamped = p * (1.0 - alpha) < 1.0
    if clamped:
        warnings.warn(f"p = {p} < 1/(1-alpha); IM quantile clamped to the maximum")
        idx = p - 1
    im = np.sort(pl, axis=1)[:, idx]
    return im, clamped


def conditional_step(model: ModelSpec, states, delta_t: float, p: int, rng):
    """``p`` risk-neutral one-step samples of the price over ``delta_t``
    conditional on each current state (the inner IM simulation)."""
    dyn = model.dynamics
    r = model.r
    s = np.asarray(states, dtype=float)
    if s.ndim == 2:
        prices, var = s[:, 0], s[:, 1]
    else:
        prices, var = s, None
    n = len(prices)
    if isinstance(dyn, BSM):
        z = rng.standard_normal((n, p))
        growth = (r - 0.5 * dyn.sigma**2) * delta_t + dyn.sigma * np.sqrt(delta_t) * z
        return prices[:, None] * np.exp(growth)
    if isinstance(dyn, MJD):
        z = rng.standard_normal((n, p))
        k = rng.poisson(dyn.lam * delta_t, size=(n, p))
        jumps = k * dyn.gamma + dyn.delta * np.sqrt(k) * rng.standard_normal((n, p))
        comp = dyn.lam * (np.exp(dyn.gamma + 0.5 * dyn.delta**2) - 1.0)
        growth = ((r - comp - 0.5 * dyn.sigma**2) * delta_t
                  + dyn.sigma * np.sqrt(delta_t) * z + jumps)
        return prices[:, None] * np.exp(growth)
    if isinstance(dyn, HSV):
        z = rng.standard_normal((n, p))
        vol = np.sqrt(np.maximum(var, 0.0))[:, None]
        growth = (r - 0.5 * vol**2) * delta_t + vol * np.sqrt(delta_t) * z
        return prices[:, None] * np.exp(growth)
    raise ValueError(type(dyn).__name__)  # pragma: no cover


def mva_isda(paths: PathSet, delta_fn, fs: FundingSpread,
             alpha: float = 0.99, mpor: float = MPOR_DEFAULT,
             inner_paths: int = INNER_PATHS_DEFAULT,
             inner_seed: int = 0, model: ModelSpec | None = None,
             inner_sampler=None, return_per_path: bool = False):
    """ISDA margin valuation adjustment

        sum_u FS(t_u) (t_u - t_{u-1}) 1/n sum_i IM^i_{t_u},

    with each IM from isda_im over ``inner_paths`` conditional one-step
    samples across the margin period of risk ``mpor``.
    """
    if inner_sampler is None:
        if model is None:
            raise ValueError("model required for the default inner sampler")
        inner_sampler = lambda t, s, rng: conditional_step(model, s, mpor,
                                                           inner_paths, rng)
    n = paths.n
    m = paths.grid.steps
    times = paths.grid.times
    gens = _path_generators(inner_seed, m, "isda-inner")
    per_path = np.zeros(n)
    for u in range(1, m + 1):
        s = paths.prices(u)
        deltas = np.asarray(delta_fn(u, s), dtype=float)
        inner = inner_sampler(times[u], s, gens[u - 1])
        im, _ = isda_im(s, inner, deltas, alpha)
        per_path += fs(times[u]) * (times[u] - times[u - 1]) * im
    if return_per_path:
        return float(per_path.mean()), per_path
    return float(per_path.mean())


# -------------------------------------------------------------------------
# Delta-function factories (terminal time uses the payoff derivative)
# -------------------------------------------------------------------------

def make_delta_analytic(pricer: PricerHandle, grid: TimeGrid):
    """delta_fn(u, s) from the pricer's closed-form delta; at maturity
    the European-call delta degenerates to the exercise indicator."""
    option = pricer.option
    times = grid.times

    def delta_fn(u, s):
        t = times[u]
        s = np.asarray(s, dtype=float)
        if t >= option.T - 1e-12:
            return _terminal_delta(option, s)
        return np.array([pricer.delta(t, x) for x in s])

    return delta_fn


def make_delta_chebyshev(approximants, grid: TimeGrid, option: OptionSpec):
    """delta_fn(u, s) from derivatives of per-time Chebyshev
    interpolants (index u-1 for u = 1..m-1); the final grid time uses
    the payoff derivative, mirroring the terminal-payoff rule."""
    derivs = [a.derivative() if a is not None else None for a in approximants]
    times = grid.times

    def delta_fn(u, s):
        s = np.asarray(s, dtype=float)
        if times[u] >= option.T - 1e-12:
            return _terminal_delta(option, s)
        d = derivs[u - 1]
        return np.array([d.eval(x) for x in s])

    return delta_fn


def _terminal_delta(option: OptionSpec, s: np.ndarray) -> np.ndarray:
    if option.kind == "EuropeanCall":
        return (s > option.K).astype(float)
    if option.kind == "AmericanPut":
        return -(s < option.K).astype(float)
    if option.kind == "DigitalPut":
        return np.zeros_like(s)
    raise ValueError(f"no terminal delta rule for {option.kind}")
