"""Path-wise exposure assembly, masking, measures and speed-ups.

Exposure at each grid time is the positive part of the position value.
The full run re-evaluates the reference pricer path by path; the
accelerated run evaluates fitted Chebyshev interpolants instead, with
the terminal time always priced by the analytically known payoff.
Path-dependency (barrier knock-out, American exercise) enters through
post-hoc masking so both runs see the same rule.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde

from .models import PathSet
from .pricing import NO_EXERCISE, OptionSpec, PricerHandle, exercise_boundary, payoff

__all__ = [
    "ExposureCube",
    "MeasureSpec",
    "MeasureResult",
    "full_reeval",
    "accelerated_reeval",
    "value_cap",
    "apply_masking",
    "measure",
    "measure_generic",
    "measure_weights",
    "profile_and_compare",
    "ProfileReport",
    "speedup",
]


@dataclass
class ExposureCube:
    """n x m matrix of nonnegative path-wise exposures.

    ``timing`` is the wall-clock of the pricing stage alone;
    ``mask_timing`` covers boundary determination / knock-out checks.
    """

    values: np.ndarray
    mask: str = "none"           # none | barrier | american
    timing: float = 0.0
    mask_timing: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("exposure cube must be n x m")
        if np.any(self.values < 0):
            raise ValueError("negative exposure entry")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


def _states_at(paths: PathSet, u: int):
    if paths.dim == 1:
        return paths.prices(u)
    return np.column_stack([paths.prices(u), paths.variances(u)])


def value_cap(option: OptionSpec, tau: float, rate: float) -> float:
    """No-arbitrage ceiling on the position value: the discounted
    supremum of the payoff (undiscounted for American exercise, which
    can be claimed immediately). Infinite for unbounded payoffs."""
    if option.kind == "DigitalPut":
        return math.exp(-rate * tau)
    if option.kind == "UpAndOutCall":
        return (option.B - option.K) * math.exp(-rate * tau)
    if option.kind == "AmericanPut":
        return option.K
    return math.inf


def full_reeval(paths: PathSet, pricer: PricerHandle, option: OptionSpec,
                boundaries=None) -> ExposureCube:
    """Exposure cube from path-wise calls to the reference pricer.

    The final grid time falls back to the payoff when it coincides with
    maturity. Pricer failures abort with the (path, time) coordinates.
    """
    n = paths.n
    m = paths.grid.steps
    times = paths.grid.times
    out = np.empty((n, m))
    tic = time.perf_counter()
    for u in range(1, m + 1):
        t = times[u]
        states = _states_at(paths, u)
        at_expiry = t >= option.T - 1e-12
        col = out[:, u - 1]
        for i in range(n):
            s = states[i] if paths.dim == 1 else states[i, 0]
            if at_expiry:
                v = payoff(option, s)
            else:
                try:
                    v = pricer.value(t, states[i] if paths.dim == 1
                                     else (states[i, 0], states[i, 1]))
                except Exception as exc:
                    raise RuntimeError(
                        f"pricer failed at path {i}, time index {u}: {exc}") from exc
            col[i] = v if v > 0.0 else 0.0
        cap = value_cap(option, option.T - t, pricer.model.r)
        if cap < math.inf:
            np.minimum(col, cap, out=col)
    cube = ExposureCube(values=out, timing=time.perf_counter() - tic)
    return _mask_for_option(cube, paths, option, pricer, boundaries)


def accelerated_reeval(paths: PathSet, approximants, option: OptionSpec,
                       boundaries=None, rate: float = 0.0) -> ExposureCube:
    """Exposure cube from interpolant evaluation.

    ``approximants`` maps u = 1..m-1 to the fitted approximant (list
    index 0 is u = 1); the final time uses the analytic payoff. States
    outside a domain without a tail abort with the offending states.
    Interpolated values are clipped at the no-arbitrage ceiling implied
    by ``rate`` (with r >= 0 the default rate of zero is a valid, if
    looser, ceiling).
    """
    n = paths.n
    m = paths.grid.steps
    out = np.empty((n, m))
    tic = time.perf_counter()
    for u in range(1, m + 1):
        states = _states_at(paths, u)
        col = out[:, u - 1]
        if u == m and paths.grid.times[u] >= option.T - 1e-12:
            prices = states if paths.dim == 1 else states[:, 0]
            for i in range(n):
                v = payoff(option, prices[i])
                col[i] = v if v > 0.0 else 0.0
            continue
        approx = approximants[u - 1]
        ev = approx.eval
        for i in range(n):
            v = ev(states[i] if paths.dim == 1 else (states[i, 0], states[i, 1]))
            col[i] = v if v > 0.0 else 0.0
        cap = value_cap(option, option.T - paths.grid.times[u], rate)
        if cap < math.inf:
            np.minimum(col, cap, out=col)
    cube = ExposureCube(values=out, timing=time.perf_counter() - tic)
    return _mask_for_option(cube, paths, option, None, boundaries)


def _mask_for_option(cube, paths, option, pricer, boundaries):
    if option.kind == "UpAndOutCall":
        return apply_masking(cube, paths, option, option.B)
    if option.kind == "AmericanPut":
        if boundaries is None:
            if pricer is None:
                raise ValueError("American masking needs exercise boundaries")
            boundaries = compute_boundaries(pricer, paths.grid, option)
        return apply_masking(cube, paths, option, boundaries)
    return cube


def compute_boundaries(pricer: PricerHandle, grid, option: OptionSpec) -> np.ndarray:
    """Early-exercise boundary per grid time (NaN where exercise is
    never optimal)."""
    model = pricer.model
    out = np.full(grid.steps + 1, NO_EXERCISE)
    for u in range(1, grid.steps + 1):
        t = grid.times[u]
        if t >= option.T - 1e-12:
            out[u] = option.K
            continue
        out[u] = exercise_boundary(option.K, model.dynamics.sigma, model.r,
                                   t, option.T, steps=pricer.tree_steps)
    return out


def apply_masking(cube: ExposureCube, paths: PathSet, option: OptionSpec,
                  boundaries) -> ExposureCube:
    """Zero exposures beyond the first barrier breach (u >= u*) or after
    American exercise (u > u*, the exercise-time exposure is kept)."""
    m = cube.m
    values = cube.values.copy()
    tic = time.perf_counter()
    if option.kind == "UpAndOutCall":
        B = float(boundaries)
        hit = np.zeros(cube.n, dtype=bool)
        for u in range(1, m + 1):
            hit |= paths.prices(u) >= B
            values[hit, u - 1] = 0.0
        label = "barrier"
    elif option.kind == "AmericanPut":
        bnds = np.asarray(boundaries, dtype=float)
        exercised = np.zeros(cube.n, dtype=bool)
        for u in range(1, m + 1):
            values[exercised, u - 1] = 0.0  # strictly after exercise
            b = bnds[u]
            if np.isfinite(b):
                exercised |= paths.prices(u) < b
        label = "american"
    else:
        return cube
    mask_time = time.perf_counter() - tic
    return ExposureCube(values=values, mask=label, timing=cube.timing,
                        mask_timing=cube.mask_timing + mask_time)


# -------------------------------------------------------------------------
# Exposure measures
# -------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureSpec:
    """Quantile-mixing measure: EE, PFE(alpha), CES(alpha), or SEM with a
    piecewise-constant nondecreasing density on (0, 1)."""

    variant: str                 # EE | PFE | CES | SEM
    alpha: float | None = None
    weights: tuple | None = None  # SEM step-density values on equal bins

    def __post_init__(self):
        if self.variant in ("PFE", "CES"):
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ValueError("alpha must lie in (0, 1)")
        if self.variant == "SEM":
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or np.any(np.diff(w) < -1e-12):
                raise ValueError("SEM density must be nonnegative and nondecreasing")
            if abs(w.mean() - 1.0) > 1e-10:
                raise ValueError("SEM density must integrate to one")

    @property
    def label(self) -> str:
        if self.variant == "EE":
            return "EE"
        if self.variant == "SEM":
            return "SEM"
        return f"{self.variant}[{self.alpha:g}]"


@dataclass
class MeasureResult:
    estimate: float
    ci_halfwidth: float
    detail: dict = field(default_factory=dict)


_Z95 = 1.959963984540054  # two-sided 95% normal quantile


def measure_weights(spec: MeasureSpec, n: int) -> np.ndarray:
    """Order-statistic weights w_{n,i} = m((i-1)/n, i/n] for the
    measure's mixing distribution."""
    i = np.arange(1, n + 1)
    if spec.variant == "EE":
        return np.full(n, 1.0 / n)
    if spec.variant == "PFE":
        w = np.zeros(n)
        w[min(int(np.floor(n * spec.alpha)), n - 1)] = 1.0
        return w
    if spec.variant == "CES":
        a = spec.alpha
        lo = np.maximum((i - 1) / n, a)
        hi = i / n
        return np.clip(hi - lo, 0.0, None) / (1.0 - a)
    if spec.variant == "SEM":
        phi = np.asarray(spec.weights, dtype=float)
        edges = np.linspace(0.0, 1.0, len(phi) + 1)
        cdf = np.concatenate([[0.0], np.cumsum(phi * np.diff(edges))])
        grid = i / n
        vals = np.interp(grid, edges, cdf)
        w = np.diff(np.concatenate([[0.0], vals]))
        return w
    raise ValueError(spec.variant)


def measure_generic(sample, weights) -> float:
    """Weighted sum of order statistics sum_i w_{n,i} x^{(i)}."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if abs(weights.sum() - 1.0) > 1e-10:
        raise ValueError("weights must sum to one")
    x = np.sort(np.asarray(sample, dtype=float))
    if len(x) != len(weights):
        raise ValueError("weight/sample length mismatch")
    return float(weights @ x)


def measure(sample, spec: MeasureSpec) -> MeasureResult:
    """Empirical exposure measure with a 95% CLT confidence interval.

    EE uses the sample variance; PFE uses alpha(1-alpha)/f^2 with a
    Gaussian-kernel density estimate at the quantile (Silverman rule);
    CES plugs the empirical tail variance Var[(X - PFE) 1{X > PFE}]
    divided by (1-alpha)^2; SEM falls back to a batch-means interval.
    """
    x = np.asarray(sample, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two observations")
    detail = {"n": n}

    if spec.variant == "EE":
        est = float(x.mean())
        sd = float(x.std(ddof=1))
        detail["sigma"] = sd
        return MeasureResult(est, _Z95 * sd / np.sqrt(n), detail)

    xs = np.sort(x)
    if spec.variant == "PFE":
        a = spec.alpha
        est = float(xs[min(int(np.floor(n * a)), n - 1)])
        if xs[0] == xs[-1]:
            detail["ci_unavailable"] = True
            return MeasureResult(est, np.nan, detail)
        f_hat = float(gaussian_kde(x)(est)[0])
        detail["density_at_quantile"] = f_hat
        if f_hat <= 0 or not np.isfinite(f_hat):
            detail["ci_unavailable"] = True
            return MeasureResult(est, np.nan, detail)
        sd = np.sqrt(a * (1.0 - a)) / f_hat
        detail["sigma"] = sd
        return MeasureResult(est, _Z95 * sd / np.sqrt(n), detail)

    if spec.variant == "CES":
        a = spec.alpha
        j = int(np.floor(n * a))
        if j + 1 > n:
            raise ValueError("alpha too large for sample size")
        q = xs[min(j, n - 1)]
        est = float((q * (j + 1 - n * a) + xs[j + 1:].sum()) / (n * (1.0 - a)))
        tail = np.where(x > q, x - q, 0.0)
        var = float(tail.var(ddof=1)) / (1.0 - a) ** 2
        detail["sigma"] = np.sqrt(var)
        return MeasureResult(est, _Z95 * np.sqrt(var / n), detail)

    if spec.variant == "SEM":
        w = measure_weights(spec, n)
        est = float(w @ xs)
        n_batch = min(10, n // 2)
        rng = np.arange(n)
        batches = np.array_split(rng, n_batch)
        ests = [measure_generic(x[b], measure_weights(spec, len(b)))
                for b in batches]
        sd = float(np.std(ests, ddof=1)) / np.sqrt(n_batch)
        detail["batches"] = n_batch
        return MeasureResult(est, _Z95 * sd, detail)

    raise ValueError(spec.variant)


# -------------------------------------------------------------------------
# Profiles, acceleration error and speed-up
# -------------------------------------------------------------------------

@dataclass
class ProfileReport:
    spec: MeasureSpec
    estimates_full: np.ndarray
    estimates_accel: np.ndarray
    ci_halfwidths: np.ndarray
    epsilon: float
    u_star: int                    # 1-based argmax time index
    epsilon_mc: float
    passed: bool
    excluded: tuple = ()


def profile_and_compare(cube_x: ExposureCube, cube_y: ExposureCube,
                        specs) -> list:
    """Time profiles of each measure on both cubes, the relative
    acceleration error eps = max_u |rho(x_u) - rho(y_u)| / rho(x_u), the
    arg-max index u*, the relative MC 95% CI width at u*, and whether
    the acceleration error stays below the MC error.

    Times with rho(x_u) = 0 are excluded from the relative max with a
    warning.
    """
    if cube_x.values.shape != cube_y.values.shape:
        raise ValueError("cubes must have identical shape")
    m = cube_x.m
    reports = []
    for spec in specs:
        est_x = np.empty(m)
        est_y = np.empty(m)
        ci = np.empty(m)
        for u in range(m):
            rx = measure(cube_x.values[:, u], spec)
            ry = measure(cube_y.values[:, u], spec)
            est_x[u] = rx.estimate
            est_y[u] = ry.estimate
            ci[u] = rx.ci_halfwidth
        excluded = tuple(int(u + 1) for u in range(m) if est_x[u] == 0.0)
        if excluded:
            warnings.warn(
                f"{spec.label}: zero estimate at time indices {excluded}; "
                "excluded from the relative error")
        valid = est_x != 0.0
        if not np.any(valid):
            raise ValueError(f"{spec.label}: estimate vanishes at every time")
        rel = np.abs(est_x - est_y)[valid] / est_x[valid]
        k = int(np.argmax(rel))
        u_star = int(np.nonzero(valid)[0][k]) + 1
        eps = float(rel[k])
        width = 2.0 * ci[u_star - 1]
        eps_mc = float(width / est_x[u_star - 1]) if np.isfinite(width) else np.nan
        passed = bool(np.isfinite(eps_mc) and eps <= eps_mc)
        reports.append(ProfileReport(
            spec=spec, estimates_full=est_x, estimates_accel=est_y,
            ci_halfwidths=ci, epsilon=eps, u_star=u_star,
            epsilon_mc=eps_mc, passed=passed, excluded=excluded))
    return reports


def speedup(timing_full: float, timing_accel: float,
            timing_mask: float = 0.0) -> float:
    """Acceleration factor (t_full + t_mask) / (t_accel + t_mask).

    ``timing_mask`` carries the exercise-policy determination time of
    the American case, which enters both runs identically; the
    accelerated timing must already include interpolant construction.
    """
    if timing_full <= 0 or timing_accel <= 0 or timing_mask < 0:
        raise ValueError("timings must be positive")
    return (timing_full + timing_mask) / (timing_accel + timing_mask)
