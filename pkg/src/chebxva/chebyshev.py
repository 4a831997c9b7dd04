"""Piecewise Chebyshev interpolation of pricing functions.

Interpolants live on path-induced domains, split at the strike in the
price dimension, optionally truncated where the value function has
reached its analytically known asymptote. Evaluation uses the Clenshaw
recurrence; doubling the degree reuses previously computed node values
thanks to the nesting cos(pi k / N) in cos(pi k / 2N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import PathSet
from .pricing import OptionSpec

__all__ = [
    "cheb_nodes",
    "cheb_fit",
    "clenshaw",
    "derivative_coeffs",
    "TailFormula",
    "ChebDomain",
    "ChebyshevApproximant",
    "OutOfDomainError",
    "DegreeCapError",
    "build_domain",
    "fit_fixed",
    "cheb_error_estimate",
    "adaptive_fit",
    "AdaptiveResult",
]


class OutOfDomainError(ValueError):
    """Evaluation outside the domain with no tail formula available."""


class DegreeCapError(RuntimeError):
    """Adaptive refinement hit the degree cap; carries the last estimate."""

    def __init__(self, degree, estimate):
        super().__init__(f"degree cap {degree} reached, error estimate {estimate:.3e}")
        self.degree = degree
        self.estimate = estimate


# -------------------------------------------------------------------------
# Core 1D transforms on [-1, 1]
# -------------------------------------------------------------------------

def cheb_nodes(N: int) -> np.ndarray:
    """The N+1 points cos(pi k / N), k = 0..N, descending from 1 to -1.

    Built symmetrically so that nodes(N) is a bitwise subset of
    nodes(2N).
    """
    if N < 1:
        raise ValueError("degree must be at least 1")
    k = np.arange(N + 1)
    x = np.cos(np.pi * k / N)
    return 0.5 * (x - x[::-1])


def cheb_fit(values, N: int) -> np.ndarray:
    """Chebyshev coefficients from the N+1 values at cheb_nodes(N).

    c_j = (2 - [j in {0,N}]) / N * sum'' f(zeta_k) cos(pi j k / N),
    where the first and last summands of the node sum are halved.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] != N + 1:
        raise ValueError(f"expected {N + 1} nodal values, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite nodal values")
    k = np.arange(N + 1)
    weights = np.ones(N + 1)
    weights[0] = weights[N] = 0.5
    cos_mat = np.cos(np.pi * np.outer(k, k) / N)
    coef = (2.0 / N) * cos_mat @ (weights * values)
    coef[0] *= 0.5
    coef[N] *= 0.5
    return coef


def clenshaw(coef: np.ndarray, x):
    """Evaluate sum c_j T_j(x) by the Clenshaw recurrence.

    ``x`` may be a scalar or an array; ``coef`` may be 1D or 2D, in
    which case the recurrence runs along the last axis (used by the
    tensorised 2D evaluation).
    """
    coef = np.asarray(coef, dtype=float)
    x = np.asarray(x, dtype=float)
    lead = coef.shape[:-1]
    pad = (1,) * x.ndim
    b1 = np.zeros(lead + x.shape)
    b2 = np.zeros_like(b1)
    for j in range(coef.shape[-1] - 1, 0, -1):
        cj = coef[..., j].reshape(lead + pad)
        b1, b2 = 2.0 * x * b1 - b2 + cj, b1
    return x * b1 - b2 + coef[..., 0].reshape(lead + pad)


def _clenshaw_scalar(coef, x: float) -> float:
    # tight scalar loop; this is the hot path of the accelerated re-evaluation
    b1 = 0.0
    b2 = 0.0
    two_x = 2.0 * x
    for j in range(len(coef) - 1, 0, -1):
        b1, b2 = two_x * b1 - b2 + coef[j], b1
    return x * b1 - b2 + coef[0]


def derivative_coeffs(coef: np.ndarray) -> np.ndarray:
    """Coefficients of the derivative series on [-1, 1].

    Backward recurrence c'_{j-1} = c'_{j+1} + 2 j c_j, with the usual
    halving of c'_0; the degree drops by one.
    """
    n = len(coef) - 1
    if n < 1:
        return np.zeros(1)
    out = np.zeros(n)
    prev2 = 0.0  # c'_{j+1}
    prev1 = 0.0  # c'_j
    for j in range(n, 0, -1):
        cur = prev2 + 2.0 * j * coef[j]
        out[j - 1] = cur
        prev2, prev1 = prev1, cur
    out[0] *= 0.5
    return out


def _to_unit(s, a, b):
    return 2.0 * (s - a) / (b - a) - 1.0


# -------------------------------------------------------------------------
# Tails and domains
# -------------------------------------------------------------------------

@dataclass(frozen=True)
class TailFormula:
    """Analytic asymptote used outside the truncated interpolation range.

    Known forms: "zero", "const" (value c), "call_itm" (s - K e^{-r tau})
    and "put_intrinsic" (K - s).
    """

    form: str
    params: tuple = ()

    def value(self, s: float) -> float:
        if self.form == "zero":
            return 0.0
        if self.form == "const":
            return self.params[0]
        if self.form == "call_itm":
            K, r, tau = self.params
            return s - K * math.exp(-r * tau)
        if self.form == "put_intrinsic":
            return self.params[0] - s
        raise ValueError(self.form)  # pragma: no cover

    def slope(self, s: float) -> float:
        if self.form in ("zero", "const"):
            return 0.0
        if self.form == "call_itm":
            return 1.0
        if self.form == "put_intrinsic":
            return -1.0
        raise ValueError(self.form)  # pragma: no cover

    def differentiated(self) -> "TailFormula":
        if self.form in ("zero", "const"):
            return TailFormula("zero")
        if self.form == "call_itm":
            return TailFormula("const", (1.0,))
        if self.form == "put_intrinsic":
            return TailFormula("const", (-1.0,))
        raise ValueError(self.form)  # pragma: no cover


@dataclass(frozen=True)
class ChebDomain:
    """Interpolation region: price intervals (split at the strike),
    optional variance interval (HSV), optional asymptotic tails.

    ``cover`` is the full range of realised prices; tails apply between
    the cover bounds and the (possibly truncated) interval ends.
    """

    intervals: tuple            # ((a1, b1), (a2, b2), ...) in the price dim
    cover: tuple                # (s_min, s_max) of realised states
    var_interval: tuple | None = None
    tail_left: TailFormula | None = None
    tail_right: TailFormula | None = None
    degenerate: bool = False

    @property
    def dims(self) -> int:
        return 2 if self.var_interval is not None else 1

    @property
    def lo(self) -> float:
        return self.intervals[0][0]

    @property
    def hi(self) -> float:
        return self.intervals[-1][1]

    def locate(self, s: float) -> int:
        """Index of the subdomain containing s (binary search over
        split points); -1 / len(intervals) flag the tail regions."""
        if s < self.lo:
            return -1
        if s > self.hi:
            return len(self.intervals)
        lo, hi = 0, len(self.intervals) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if s <= self.intervals[mid][1]:
                hi = mid
            else:
                lo = mid + 1
        return lo


def build_domain(paths: PathSet, u: int, option: OptionSpec, pricer,
                 tol_tail: float | None = None,
                 max_bisect: int = 60) -> ChebDomain:
    """Path-induced interpolation domain at time index ``u``.

    The price interval is [min, max] of the realised prices, split at
    the strike, and truncated by bisection where the value function is
    within ``tol_tail`` of its analytic asymptote. For HSV the variance
    interval is the realised [min, max] (no split, no tails).
    """
    if u < 1:
        raise ValueError("domains are built for u >= 1")
    K = option.K
    t = paths.grid.times[u]
    tau = option.T - t
    tol = tol_tail if tol_tail is not None else 1e-8 * K
    s = paths.prices(u)
    s_min, s_max = float(s.min()), float(s.max())
    degenerate = (s_max - s_min) < 1e-12 * max(s_max, 1.0)
    if degenerate:
        center = 0.5 * (s_min + s_max)
        s_min, s_max = center * 0.99, center * 1.01

    # payoff-forced bound: an up-and-out call is worthless at and above B
    if option.kind == "UpAndOutCall" and option.B is not None and s_max > option.B:
        s_max = float(option.B)

    left_tail, right_tail = _tails_for(option, tau, pricer.model.r)

    lo, hi = s_min, s_max
    value = lambda x: pricer.value(t, _state(x, paths, u))
    if left_tail is not None:
        lo = _truncate(value, left_tail, s_min, min(K, s_max), tol, max_bisect,
                       from_left=True)
    if right_tail is not None and option.kind != "UpAndOutCall":
        hi = _truncate(value, right_tail, max(K, s_min), s_max, tol, max_bisect,
                       from_left=False)

    if lo >= hi:  # truncation collapsed (should not happen); keep full range
        lo, hi = s_min, s_max
    if lo < K < hi:
        intervals = ((lo, K), (K, hi))
    else:
        intervals = ((lo, hi),)

    var_interval = None
    if paths.dim == 2:
        nu = paths.variances(u)
        v_lo, v_hi = float(nu.min()), float(nu.max())
        if v_hi - v_lo < 1e-12 * max(v_hi, 1e-8):
            mid = 0.5 * (v_lo + v_hi)
            pad = max(0.01 * mid, 1e-6)
            v_lo, v_hi = max(mid - pad, 0.0), mid + pad
        var_interval = (v_lo, v_hi)

    return ChebDomain(intervals=intervals, cover=(s_min, s_max),
                      var_interval=var_interval,
                      tail_left=left_tail, tail_right=right_tail,
                      degenerate=degenerate)


def _tails_for(option: OptionSpec, tau: float, r: float):
    if option.kind == "EuropeanCall":
        return TailFormula("zero"), TailFormula("call_itm", (option.K, r, tau))
    if option.kind == "DigitalPut":
        # deep in the money the digital pays one unit at maturity for sure
        return TailFormula("const", (math.exp(-r * tau),)), TailFormula("zero")
    if option.kind == "UpAndOutCall":
        # value is identically zero at and beyond the barrier
        return TailFormula("zero"), TailFormula("zero")
    if option.kind == "AmericanPut":
        return TailFormula("put_intrinsic", (option.K,)), TailFormula("zero")
    raise ValueError(option.kind)  # pragma: no cover


def _state(s: float, paths: PathSet, u: int):
    """Lift a spot into the pricer's state space; for 2D models pin the
    variance at its realised median (domain truncation is price-only)."""
    if paths.dim == 1:
        return s
    return (s, float(np.median(paths.variances(u))))


def _truncate(value, tail: TailFormula, lo: float, hi: float, tol: float,
              max_iter: int, from_left: bool) -> float:
    """Bisect for the point where |V - asymptote| crosses ``tol``.

    Returns the cut point; collapses to the interval end when the value
    is nowhere asymptotic on that side.
    """
    if hi <= lo:
        return lo if from_left else hi

    def close(x):
        return abs(value(x) - tail.value(x)) < tol

    outer = lo if from_left else hi
    inner = hi if from_left else lo
    if not close(outer):
        return outer
    if close(inner):
        return inner
    a, b = outer, inner
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if close(mid):
            a = mid
        else:
            b = mid
        if abs(b - a) < 1e-12 * max(abs(a), 1.0):
            break
    return a


# -------------------------------------------------------------------------
# Approximants
# -------------------------------------------------------------------------

@dataclass
class ChebyshevApproximant:
    """Per-time-point piecewise Chebyshev interpolant.

    ``coeffs[i]`` is the coefficient vector (1D) or matrix (2D, price
    axis first) on ``domain.intervals[i]``. Immutable in practice and
    safe for concurrent evaluation.
    """

    domain: ChebDomain
    coeffs: tuple
    provenance: str = ""

    @property
    def degree(self) -> int:
        n = self.coeffs[0].shape[0] - 1
        return n

    def eval(self, z) -> float:
        """Value at state ``z`` (spot, or (spot, variance) in 2D)."""
        if self.domain.dims == 2:
            s, nu = float(z[0]), float(z[1])
        else:
            s, nu = float(z), None
        idx = self.domain.locate(s)
        if idx < 0:
            if self.domain.tail_left is None:
                raise OutOfDomainError(f"state {s} below domain {self.domain.lo}")
            return self.domain.tail_left.value(s)
        if idx >= len(self.domain.intervals):
            if self.domain.tail_right is None:
                raise OutOfDomainError(f"state {s} above domain {self.domain.hi}")
            return self.domain.tail_right.value(s)
        a, b = self.domain.intervals[idx]
        x = _to_unit(s, a, b)
        coef = self.coeffs[idx]
        if nu is None:
            return _clenshaw_scalar(coef, x)
        va, vb = self.domain.var_interval
        y = _to_unit(min(max(nu, va), vb), va, vb)
        inner = clenshaw(coef, y)
        return _clenshaw_scalar(inner, x)

    def eval_many(self, zs: np.ndarray) -> np.ndarray:
        return np.array([self.eval(z) for z in zs])

    def derivative(self) -> "ChebyshevApproximant":
        """Approximant of dV/ds with tail slopes as its tail formulas."""
        new_coeffs = []
        for (a, b), coef in zip(self.domain.intervals, self.coeffs):
            scale = 2.0 / (b - a)
            if coef.ndim == 1:
                new_coeffs.append(scale * derivative_coeffs(coef))
            else:
                rows = np.stack([derivative_coeffs(coef[:, k])
                                 for k in range(coef.shape[1])], axis=1)
                new_coeffs.append(scale * rows)
        dom = self.domain
        new_dom = ChebDomain(intervals=dom.intervals, cover=dom.cover,
                             var_interval=dom.var_interval,
                             tail_left=dom.tail_left.differentiated()
                             if dom.tail_left else None,
                             tail_right=dom.tail_right.differentiated()
                             if dom.tail_right else None,
                             degenerate=dom.degenerate)
        return ChebyshevApproximant(domain=new_dom, coeffs=tuple(new_coeffs),
                                    provenance=self.provenance + ":ds")

    # -- serialization ----------------------------------------------------

    FORMAT_VERSION = 1

    def save(self, path) -> None:
        dom = self.domain
        meta = dict(
            version=self.FORMAT_VERSION,
            intervals=np.asarray(dom.intervals),
            cover=np.asarray(dom.cover),
            provenance=self.provenance,
            degenerate=dom.degenerate,
        )
        if dom.var_interval is not None:
            meta["var_interval"] = np.asarray(dom.var_interval)
        for side, tail in (("left", dom.tail_left), ("right", dom.tail_right)):
            if tail is not None:
                meta[f"tail_{side}_form"] = tail.form
                meta[f"tail_{side}_params"] = np.asarray(tail.params)
        for i, c in enumerate(self.coeffs):
            meta[f"coef_{i}"] = c
        with open(path, "wb") as fh:
            np.savez(fh, **meta)

    @classmethod
    def load(cls, path) -> "ChebyshevApproximant":
        data = np.load(path, allow_pickle=False)
        if int(data["version"]) != cls.FORMAT_VERSION:
            raise ValueError("unsupported approximant format version")
        tails = {}
        for side in ("left", "right"):
            key = f"tail_{side}_form"
            if key in data:
                tails[side] = TailFormula(str(data[key]),
                                          tuple(data[f"tail_{side}_params"]))
        dom = ChebDomain(
            intervals=tuple(map(tuple, data["intervals"])),
            cover=tuple(data["cover"]),
            var_interval=tuple(data["var_interval"]) if "var_interval" in data else None,
            tail_left=tails.get("left"),
            tail_right=tails.get("right"),
            degenerate=bool(data["degenerate"]),
        )
        coeffs = []
        i = 0
        while f"coef_{i}" in data:
            coeffs.append(data[f"coef_{i}"])
            i += 1
        return cls(domain=dom, coeffs=tuple(coeffs),
                   provenance=str(data["provenance"]))


def _nodal_values(fn, domain: ChebDomain, idx: int, N: int, N_var: int | None):
    a, b = domain.intervals[idx]
    xs = 0.5 * (a + b) + 0.5 * (b - a) * cheb_nodes(N)
    if domain.dims == 1:
        return np.array([fn(x) for x in xs])
    va, vb = domain.var_interval
    ys = 0.5 * (va + vb) + 0.5 * (vb - va) * cheb_nodes(N_var)
    return np.array([[fn((x, y)) for y in ys] for x in xs])


def _fit_values(values: np.ndarray, N: int, N_var: int | None) -> np.ndarray:
    if values.ndim == 1:
        return cheb_fit(values, N)
    # tensorised: 1D transform along each axis in turn
    tmp = np.stack([cheb_fit(values[:, k], N) for k in range(values.shape[1])], axis=1)
    return np.stack([cheb_fit(tmp[j, :], N_var) for j in range(tmp.shape[0])], axis=0)


def fit_fixed(fn, domain: ChebDomain, N: int, N_var: int | None = None,
              provenance: str = "") -> ChebyshevApproximant:
    """Degree-N interpolant of ``fn`` on every subdomain (tensor grid of
    degrees (N, N_var) in 2D; N_var defaults to N)."""
    if domain.dims == 2 and N_var is None:
        N_var = N
    coeffs = tuple(_fit_values(_nodal_values(fn, domain, i, N, N_var), N, N_var)
                   for i in range(len(domain.intervals)))
    return ChebyshevApproximant(domain=domain, coeffs=coeffs, provenance=provenance)


# -------------------------------------------------------------------------
# A posteriori error estimate and adaptive degree doubling
# -------------------------------------------------------------------------

def cheb_error_estimate(approx_low: ChebyshevApproximant,
                        approx_high: ChebyshevApproximant,
                        n_probe: int = 100, seed: int = 0) -> float:
    """Max |high - low| on ``n_probe`` uniform random points per
    subdomain (the a posteriori refinement estimate)."""
    if approx_low.domain.intervals != approx_high.domain.intervals:
        raise ValueError("approximants must share a domain")
    rng = np.random.default_rng(seed)
    worst = 0.0
    dom = approx_low.domain
    for a, b in dom.intervals:
        xs = rng.uniform(a, b, n_probe)
        if dom.dims == 2:
            va, vb = dom.var_interval
            ys = rng.uniform(va, vb, n_probe)
            zs = list(zip(xs, ys))
        else:
            zs = xs
        for z in zs:
            worst = max(worst, abs(approx_high.eval(z) - approx_low.eval(z)))
    return worst


@dataclass
class AdaptiveResult:
    approximant: ChebyshevApproximant
    degree: int
    error_estimate: float
    fn_calls: int
    finer: ChebyshevApproximant = field(repr=False, default=None)


def adaptive_fit(fn, domain: ChebDomain, target: float, probe_seed: int = 0,
                 degree_cap: int = 1024, n_probe: int = 100,
                 return_finer: bool = False,
                 provenance: str = "") -> AdaptiveResult:
    """Degree-doubling refinement until the a posteriori estimate beats
    ``target``.

    Starting at degree 1, the degree is doubled (in both dimensions for
    2D domains) and the error of the previous level is estimated as the
    max difference to the new level on random probes; when the estimate
    drops below ``target`` the preceding approximant is selected. Nodal
    evaluations are reused across levels via the nested node structure.
    ``return_finer`` selects the last (finer) approximant instead.
    """
    if target <= 0:
        raise ValueError("target accuracy must be positive")
    two_d = domain.dims == 2
    calls = 0

    def values_at(N):
        nonlocal calls
        out = []
        for i in range(len(domain.intervals)):
            vals = _nodal_values(fn, domain, i, N, N if two_d else None)
            out.append(vals)
            calls += vals.size
        return out

    def refine(prev_vals, N2):
        """Values at degree N2 = 2N reusing the even-index entries."""
        nonlocal calls
        out = []
        for i, prev in enumerate(prev_vals):
            full = _nodal_values_sparse(fn, domain, i, N2, prev, two_d)
            calls += _new_count(N2, two_d)
            out.append(full)
        return out

    N = 1
    vals = values_at(N)
    prev_approx = _assemble(domain, vals, N, two_d, provenance)
    last_estimate = math.inf
    while True:
        N2 = 2 * N
        if N2 > degree_cap:
            raise DegreeCapError(N, last_estimate)
        vals = refine(vals, N2)
        cur_approx = _assemble(domain, vals, N2, two_d, provenance)
        est = cheb_error_estimate(prev_approx, cur_approx, n_probe, probe_seed)
        if est < target:
            chosen = cur_approx if return_finer else prev_approx
            return AdaptiveResult(approximant=chosen, degree=chosen.degree,
                                  error_estimate=est, fn_calls=calls,
                                  finer=cur_approx)
        N = N2
        prev_approx = cur_approx
        last_estimate = est


def _assemble(domain, values_list, N, two_d, provenance):
    coeffs = tuple(_fit_values(v, N, N if two_d else None) for v in values_list)
    return ChebyshevApproximant(domain=domain, coeffs=coeffs, provenance=provenance)


def _new_count(N2, two_d):
    if not two_d:
        return N2 // 2  # odd-index nodes only
    n_old = N2 // 2 + 1
    return (N2 + 1) ** 2 - n_old**2


def _nodal_values_sparse(fn, domain, idx, N2, prev, two_d):
    a, b = domain.intervals[idx]
    xs = 0.5 * (a + b) + 0.5 * (b - a) * cheb_nodes(N2)
    if not two_d:
        full = np.empty(N2 + 1)
        full[::2] = prev
        full[1::2] = [fn(x) for x in xs[1::2]]
        return full
    va, vb = domain.var_interval
    ys = 0.5 * (va + vb) + 0.5 * (vb - va) * cheb_nodes(N2)
    full = np.empty((N2 + 1, N2 + 1))
    full[::2, ::2] = prev
    for j in range(N2 + 1):
        for k in range(N2 + 1):
            if j % 2 == 0 and k % 2 == 0:
                continue
            full[j, k] = fn((xs[j], ys[k]))
    return full
