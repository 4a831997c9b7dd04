"""Risk-factor models and Monte Carlo path generation.

Three single-asset models are supported: Black-Scholes-Merton (BSM),
Merton jump-diffusion (MJD) and Heston stochastic volatility (HSV).
Paths are simulated on an equidistant grid with an exponential Euler
update on the log-price, which keeps prices strictly positive; the HSV
variance uses a full-truncation Euler step floored at zero.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BSM",
    "MJD",
    "HSV",
    "ModelSpec",
    "TimeGrid",
    "PathSet",
    "simulate",
    "sp500_bsm",
    "sp500_mjd",
    "sp500_hsv",
]


@dataclass(frozen=True)
class BSM:
    """Geometric Brownian motion dynamics with volatility ``sigma``.

    ``sigma = 0`` is allowed as a degenerate (deterministic) limit,
    useful for exact sanity checks.
    """

    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("BSM sigma must be nonnegative")


@dataclass(frozen=True)
class MJD:
    """Jump-diffusion: diffusion vol ``sigma``, Poisson intensity ``lam``,
    lognormal jump marks N(gamma, delta^2) added to the log-price."""

    sigma: float
    lam: float
    gamma: float
    delta: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("MJD sigma must be positive")
        if self.lam < 0:
            raise ValueError("jump intensity must be nonnegative")
        if self.delta < 0:
            raise ValueError("jump mark stdev must be nonnegative")

    @property
    def jump_mean(self) -> float:
        """Expected relative jump size E[e^Y - 1]."""
        return np.expm1(self.gamma + 0.5 * self.delta**2)


@dataclass(frozen=True)
class HSV:
    """Heston square-root stochastic variance dynamics."""

    nu0: float
    kappa: float
    theta: float
    eta: float
    rho: float

    def __post_init__(self):
        if self.nu0 < 0 or self.theta < 0:
            raise ValueError("variance levels must be nonnegative")
        if self.eta <= 0:
            raise ValueError("vol-of-vol eta must be positive")
        if self.kappa <= 0:
            raise ValueError("mean-reversion kappa must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("correlation rho must lie in [-1, 1]")


@dataclass(frozen=True)
class ModelSpec:
    """A calibrated model: dynamics plus spot, physical drift and rate."""

    dynamics: BSM | MJD | HSV
    s0: float
    mu: float
    r: float

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError("initial price must be positive")

    @property
    def dim(self) -> int:
        """State dimension: 1 (price) or 2 (price, variance)."""
        return 2 if isinstance(self.dynamics, HSV) else 1


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant exposure grid t_u = u*T/m, u = 0..m."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.steps < 1:
            raise ValueError("need at least one time step")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass(frozen=True)
class PathSet:
    """Simulated risk-factor states: array of shape (n, m+1, d).

    ``states[:, :, 0]`` is the asset price; for HSV ``states[:, :, 1]``
    is the instantaneous variance. Immutable once built; safe to share
    across threads.
    """

    grid: TimeGrid
    states: np.ndarray
    seed: int
    measure: str = "physical"

    def __post_init__(self):
        self.states.setflags(write=False)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def prices(self, u: int | None = None) -> np.ndarray:
        """Asset prices at time index ``u`` (all times if None)."""
        if u is None:
            return self.states[:, :, 0]
        return self.states[:, u, 0]

    def variances(self, u: int | None = None) -> np.ndarray:
        if self.dim < 2:
            raise ValueError("path set has no variance component")
        if u is None:
            return self.states[:, :, 1]
        return self.states[:, u, 1]

    # -- flat CSV layout for experiment caching --------------------------

    def save_csv(self, path) -> None:
        """Write header (n, m, d, seed) followed by row-major states."""
        n, mp1, d = self.states.shape
        with open(path, "w") as fh:
            fh.write(f"# n={n},m={mp1 - 1},d={d},seed={self.seed},"
                     f"T={self.grid.horizon!r},measure={self.measure}\n")
            flat = self.states.reshape(n, mp1 * d)
            np.savetxt(fh, flat, delimiter=",", fmt="%.17g")

    @classmethod
    def load_csv(cls, path) -> "PathSet":
        with open(path) as fh:
            header = fh.readline().lstrip("# ").strip()
            meta = dict(kv.split("=") for kv in header.split(","))
            flat = np.loadtxt(fh, delimiter=",", ndmin=2)
        n, m, d = int(meta["n"]), int(meta["m"]), int(meta["d"])
        grid = TimeGrid(horizon=float(meta["T"]), steps=m)
        states = flat.reshape(n, m + 1, d)
        return cls(grid=grid, states=states, seed=int(meta["seed"]),
                   measure=meta.get("measure", "physical"))


def _path_generators(seed: int, n: int, label: str):
    """Independent per-path substreams.

    Substream i depends only on (seed, label, i), so enlarging n extends
    the path set without reshuffling earlier paths, and physical and
    risk-neutral runs with the same seed use independent streams.
    """
    tag = int.from_bytes(label.encode(), "little") % (2**32)
    root = np.random.SeedSequence(entropy=seed, spawn_key=(tag,))
    return [np.random.Generator(np.random.Philox(child)) for child in root.spawn(n)]


def simulate(model: ModelSpec, grid: TimeGrid, n: int,
             measure: str = "physical", seed: int = 0) -> PathSet:
    """Generate ``n`` paths of the risk factors under ``model``.

    ``measure`` selects the drift: "physical" uses ``model.mu``,
    "risk-neutral" uses ``model.r`` (with jump compensation for MJD so
    that the discounted price is a martingale).
    """
    if n < 1:
        raise ValueError("need at least one path")
    if measure not in ("physical", "risk-neutral"):
        raise ValueError(f"unknown measure {measure!r}")

    dyn = model.dynamics
    m, dt = grid.steps, grid.dt
    sq_dt = np.sqrt(dt)
    drift = model.mu if measure == "physical" else model.r
    gens = _path_generators(seed, n, measure)

    d = model.dim
    states = np.empty((n, m + 1, d))

    if isinstance(dyn, BSM):
        inc_mean = (drift - 0.5 * dyn.sigma**2) * dt
        log_s0 = np.log(model.s0)
        for i, rng in enumerate(gens):
            z = rng.standard_normal(m)
            log_path = log_s0 + np.cumsum(inc_mean + dyn.sigma * sq_dt * z)
            states[i, 0, 0] = model.s0
            states[i, 1:, 0] = np.exp(log_path)
    elif isinstance(dyn, MJD):
        comp = dyn.lam * dyn.jump_mean * dt if measure == "risk-neutral" else 0.0
        inc_mean = (drift - 0.5 * dyn.sigma**2) * dt - comp
        log_s0 = np.log(model.s0)
        for i, rng in enumerate(gens):
            z = rng.standard_normal(m)
            k = rng.poisson(dyn.lam * dt, size=m)
            zj = rng.standard_normal(m)
            # sum of k iid N(gamma, delta^2) marks, drawn via its exact law
            jumps = k * dyn.gamma + dyn.delta * np.sqrt(k) * zj
            log_path = log_s0 + np.cumsum(inc_mean + dyn.sigma * sq_dt * z + jumps)
            states[i, 0, 0] = model.s0
            states[i, 1:, 0] = np.exp(log_path)
    elif isinstance(dyn, HSV):
        root_1m_rho2 = np.sqrt(1.0 - dyn.rho**2)
        log_s0 = np.log(model.s0)
        for i, rng in enumerate(gens):
            zv = rng.standard_normal(m)
            zp = rng.standard_normal(m)
            zs = dyn.rho * zv + root_1m_rho2 * zp
            log_s = log_s0
            nu = dyn.nu0
            states[i, 0, 0] = model.s0
            states[i, 0, 1] = dyn.nu0
            for u in range(m):
                nu_pos = max(nu, 0.0)
                vol = np.sqrt(nu_pos)
                log_s += (drift - 0.5 * nu_pos) * dt + vol * sq_dt * zs[u]
                nu = nu + dyn.kappa * (dyn.theta - nu_pos) * dt \
                    + dyn.eta * vol * sq_dt * zv[u]
                nu = max(nu, 0.0)
                states[i, u + 1, 0] = np.exp(log_s)
                states[i, u + 1, 1] = nu
    else:  # pragma: no cover
        raise TypeError(f"unsupported dynamics {type(dyn).__name__}")

    return PathSet(grid=grid, states=states, seed=seed, measure=measure)


# -- calibrated market presets (S&P 500, July 2022) ----------------------

_S0, _MU, _R = 3825.33, 0.11, 0.0110


def sp500_bsm() -> ModelSpec:
    return ModelSpec(BSM(sigma=0.1943), s0=_S0, mu=_MU, r=_R)


def sp500_mjd() -> ModelSpec:
    return ModelSpec(MJD(sigma=0.1483, lam=1.2998, gamma=-0.1475, delta=0.1331),
                     s0=_S0, mu=_MU, r=_R)


def sp500_hsv() -> ModelSpec:
    return ModelSpec(HSV(nu0=0.0650, kappa=2.3134, theta=0.0889,
                         eta=0.9898, rho=-0.7040),
                     s0=_S0, mu=_MU, r=_R)
