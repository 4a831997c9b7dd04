"""Experiment orchestration: end-to-end exposure runs, XVA runs and
diagnostics, with CSV/JSON reports and rendered figures.

Each run writes into an output directory:
    profiles.csv        per-time measure profiles (full vs accelerated)
    manifest.json       seed, config hash, timings, error table
    approximants/*.bin  per-time interpolant records
    *.png               plot of the profile / convergence data
"""

from __future__ import annotations

import hashlib
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import bounds as bounds_mod
from .chebyshev import adaptive_fit, build_domain, fit_fixed
from .exposure import (MeasureSpec, accelerated_reeval, compute_boundaries,
                       full_reeval, measure, profile_and_compare, speedup)
from .models import TimeGrid, simulate, sp500_bsm, sp500_hsv, sp500_mjd
from .pricing import OptionSpec, PricerHandle
from .xva import (PDCurve, FundingSpread, cva_delta_mc, make_delta_analytic,
                  make_delta_chebyshev, mva_isda)

__all__ = ["RunConfig", "run_experiment", "run_xva", "run_diagnostics",
           "run_bench", "load_config"]

_MODELS = {"bsm": sp500_bsm, "mjd": sp500_mjd, "hsv": sp500_hsv}
_OPTIONS = {
    "european_call": ("EuropeanCall", dict()),
    "digital_put": ("DigitalPut", dict()),
    "up_and_out_call": ("UpAndOutCall", dict(B=5738.0)),
    "american_put": ("AmericanPut", dict()),
}


@dataclass
class RunConfig:
    """Configuration of a single experiment run."""

    model: str = "bsm"
    option: str = "european_call"
    method: str = "analytic"            # analytic | cos | binomial
    n: int = 10_000
    m: int = 52
    horizon: float = 1.0
    strike: float = 3825.33
    barrier: float = 5738.0
    seed: int = 0
    n_cos: int = 256
    tree_steps: int = 256
    mode: str = "fixed"                 # fixed | adaptive
    degree: int = 8
    alpha: float = 0.95
    measures: tuple = ("EE", "PFE", "CES")
    threads: int = 1
    out: str = "out"

    def __post_init__(self):
        if self.model not in _MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.option not in _OPTIONS:
            raise ValueError(f"unknown option {self.option!r}")
        if self.n < 100:
            raise ValueError("need n >= 100 for measure confidence intervals")

    def model_spec(self):
        return _MODELS[self.model]()

    def option_spec(self) -> OptionSpec:
        kind, extra = _OPTIONS[self.option]
        kw = dict(kind=kind, K=self.strike, T=self.horizon)
        if kind == "UpAndOutCall":
            kw["B"] = self.barrier
        return OptionSpec(**kw)

    def measure_specs(self):
        out = []
        for name in self.measures:
            if name == "EE":
                out.append(MeasureSpec("EE"))
            elif name in ("PFE", "CES"):
                out.append(MeasureSpec(name, alpha=self.alpha))
            else:
                raise ValueError(f"unknown measure {name!r}")
        return out

    def digest(self) -> str:
        # hash of the scientific configuration only: where the results
        # are written and how many threads ran does not change them
        payload = {k: v for k, v in asdict(self).items()
                   if k not in ("out", "threads")}
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True, default=str).encode()
        ).hexdigest()[:16]


def load_config(path) -> RunConfig:
    """Read a run configuration from a YAML file."""
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if "measures" in data:
        data["measures"] = tuple(data["measures"])
    return RunConfig(**data)


def _manifest(cfg: RunConfig, extra: dict) -> dict:
    return {
        "config": asdict(cfg),
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "threads": cfg.threads,
        "hardware": f"{platform.machine()} / {platform.processor() or 'unknown'}",
        **extra,
    }


def _write_json(path: Path, payload) -> None:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    path.write_text(json.dumps(payload, indent=2, default=default) + "\n")


def _write_profiles_csv(path: Path, grid: TimeGrid, reports) -> None:
    lines = ["u,t,measure,estimate_full,estimate_accel,ci_halfwidth"]
    for rep in reports:
        for u in range(1, grid.steps + 1):
            lines.append(
                f"{u},{grid.times[u]:.10g},{rep.spec.label},"
                f"{rep.estimates_full[u - 1]:.10g},"
                f"{rep.estimates_accel[u - 1]:.10g},"
                f"{rep.ci_halfwidths[u - 1]:.10g}")
    path.write_text("\n".join(lines) + "\n")


def _plot_profiles(path: Path, grid: TimeGrid, reports) -> None:
    fig, axes = plt.subplots(1, len(reports), figsize=(5 * len(reports), 4),
                             squeeze=False)
    ts = grid.times[1:]
    for ax, rep in zip(axes[0], reports):
        ax.plot(ts, rep.estimates_full, label="full re-evaluation")
        ax.plot(ts, rep.estimates_accel, "--", label="Chebyshev")
        ax.fill_between(ts, rep.estimates_full - rep.ci_halfwidths,
                        rep.estimates_full + rep.ci_halfwidths, alpha=0.2)
        ax.set_title(rep.spec.label)
        ax.set_xlabel("t")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _build_approximants(cfg: RunConfig, paths, pricer, option, specs,
                        cube_full=None):
    """Fit the per-time interpolants; returns (approximants, fit_time,
    pricer_calls, info dict)."""
    grid = paths.grid
    info = {"mode": cfg.mode}
    approximants = []
    calls_before = pricer.calls
    tic = time.perf_counter()

    if cfg.mode == "adaptive":
        target = _adaptive_target(cfg, paths, pricer, option, specs)
        info["target"] = target
        degrees = []
        for u in range(1, grid.steps):
            dom = build_domain(paths, u, option, pricer)
            t = grid.times[u]
            res = adaptive_fit(lambda z: pricer.value(t, z), dom, target,
                               probe_seed=cfg.seed + u,
                               provenance=f"{cfg.model}:{cfg.option}:u{u}")
            approximants.append(res.approximant)
            degrees.append(res.degree)
        info["degrees"] = degrees
    else:
        two_d = paths.dim == 2
        for u in range(1, grid.steps):
            dom = build_domain(paths, u, option, pricer)
            t = grid.times[u]
            approximants.append(fit_fixed(
                lambda z: pricer.value(t, z), dom, cfg.degree,
                provenance=f"{cfg.model}:{cfg.option}:u{u}"))
        info["degree"] = cfg.degree
    fit_time = time.perf_counter() - tic
    info["pricer_calls"] = pricer.calls - calls_before
    return approximants, fit_time, info


def _adaptive_target(cfg: RunConfig, paths, pricer, option, specs) -> float:
    """Smallest MC confidence-interval width across measures and times,
    estimated from exposures under a piecewise-linear (degree-1)
    approximation of the pricer."""
    grid = paths.grid
    rough = []
    for u in range(1, grid.steps):
        dom = build_domain(paths, u, option, pricer)
        t = grid.times[u]
        rough.append(fit_fixed(lambda z: pricer.value(t, z), dom, 1))
    cube = accelerated_reeval(paths, rough, option,
                              boundaries=None if option.kind != "AmericanPut"
                              else compute_boundaries(pricer, grid, option),
                              rate=pricer.model.r)
    widths = []
    for spec in specs:
        for u in range(cube.m):
            res = measure(cube.values[:, u], spec)
            w = 2.0 * res.ci_halfwidth
            if np.isfinite(w) and w > 0:
                widths.append(w)
    if not widths:
        raise RuntimeError("no usable confidence width for the adaptive target")
    return float(min(widths))


def run_experiment(cfg: RunConfig, out_dir=None) -> dict:
    """Full exposure-acceleration experiment: simulate, price path-wise,
    fit interpolants, re-evaluate, compare and report."""
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    model = cfg.model_spec()
    grid = TimeGrid(horizon=cfg.horizon, steps=cfg.m)
    option = cfg.option_spec()
    specs = cfg.measure_specs()

    stage = "simulate"
    try:
        paths = simulate(model, grid, cfg.n, "physical", seed=cfg.seed)

        stage = "pricer"
        pricer = PricerHandle(model=model, option=option, method=cfg.method,
                              n_cos=cfg.n_cos, tree_steps=cfg.tree_steps)

        stage = "boundaries"
        boundaries = None
        mask_time = 0.0
        if option.kind == "AmericanPut":
            tic = time.perf_counter()
            boundaries = compute_boundaries(pricer, grid, option)
            mask_time = time.perf_counter() - tic

        stage = "full_reeval"
        cube_x = full_reeval(paths, pricer, option, boundaries=boundaries)

        stage = "fit"
        approximants, fit_time, fit_info = _build_approximants(
            cfg, paths, pricer, option, specs)

        stage = "accelerated_reeval"
        cube_y = accelerated_reeval(paths, approximants, option,
                                    boundaries=boundaries, rate=model.r)

        stage = "compare"
        reports = profile_and_compare(cube_x, cube_y, specs)
        factor = speedup(cube_x.timing, cube_y.timing + fit_time, mask_time)
    except Exception as exc:
        raise RuntimeError(f"experiment stage {stage!r} failed: {exc}") from exc

    approx_dir = out / "approximants"
    approx_dir.mkdir(exist_ok=True)
    for u, a in enumerate(approximants, start=1):
        a.save(approx_dir / f"u_{u:03d}.bin")

    _write_profiles_csv(out / "profiles.csv", grid, reports)
    _plot_profiles(out / "profiles.png", grid, reports)

    table = [{
        "measure": rep.spec.label,
        "epsilon": rep.epsilon,
        "u_star": rep.u_star,
        "epsilon_mc": rep.epsilon_mc,
        "passed": rep.passed,
    } for rep in reports]
    manifest = _manifest(cfg, {
        "fit": fit_info,
        "timings": {
            "full_reeval_s": cube_x.timing,
            "accelerated_eval_s": cube_y.timing,
            "fit_s": fit_time,
            "mask_s": mask_time,
            "total_s": time.perf_counter() - t_start,
        },
        "speedup": factor,
        "error_table": table,
        "all_passed": all(r["passed"] for r in table),
    })
    _write_json(out / "manifest.json", manifest)
    return manifest


def run_xva(cfg: RunConfig, out_dir=None, cheb_degree: int = 16) -> dict:
    """CVA delta and ISDA MVA with analytic and Chebyshev deltas on
    shared risk-neutral paths."""
    if cfg.model != "bsm" or cfg.option != "european_call":
        raise ValueError("XVA run supports the BSM European call only")
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    model = cfg.model_spec()
    grid = TimeGrid(horizon=cfg.horizon, steps=cfg.m)
    option = cfg.option_spec()
    paths = simulate(model, grid, cfg.n, "risk-neutral", seed=cfg.seed)
    pricer = PricerHandle(model=model, option=option, method="analytic")

    approximants = []
    for u in range(1, grid.steps):
        dom = build_domain(paths, u, option, pricer)
        t = grid.times[u]
        approximants.append(fit_fixed(lambda s: pricer.value(t, s),
                                      dom, cheb_degree))

    pd_curve = PDCurve(horizon=option.T)
    fs = FundingSpread(0.01)
    delta_an = make_delta_analytic(pricer, grid)
    delta_ch = make_delta_chebyshev(approximants, grid, option)

    results = {}
    for label, dfn in (("analytic", delta_an), ("chebyshev", delta_ch)):
        tic = time.perf_counter()
        cva = cva_delta_mc(paths, dfn, pd_curve, model.r)
        t_cva = time.perf_counter() - tic
        tic = time.perf_counter()
        mva = mva_isda(paths, dfn, fs, model=model, inner_seed=cfg.seed)
        t_mva = time.perf_counter() - tic
        results[label] = {"cva_delta": cva, "mva": mva,
                          "cva_runtime_s": t_cva, "mva_runtime_s": t_mva}

    payload = _manifest(cfg, {
        "cva_delta": {k: v["cva_delta"] for k, v in results.items()},
        "mva": {k: v["mva"] for k, v in results.items()},
        "cva_abs_difference": abs(results["analytic"]["cva_delta"]
                                  - results["chebyshev"]["cva_delta"]),
        "mva_rel_difference": abs(results["analytic"]["mva"]
                                  - results["chebyshev"]["mva"])
        / abs(results["analytic"]["mva"]),
        "details": results,
        "runtime_s": time.perf_counter() - t_start,
        "cheb_degree": cheb_degree,
    })
    _write_json(out / "xva.json", payload)
    return payload


def run_diagnostics(cfg: RunConfig, out_dir=None) -> dict:
    """Theory diagnostics: the tractable digital example, convergence
    slope of the Chebyshev fit, the ordered-difference contraction, and
    a planner sample."""
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    digital = bounds_mod.digital_example()

    # convergence of the split-domain fit to the analytic BSM call
    model = sp500_bsm()
    option = OptionSpec(kind="EuropeanCall", K=cfg.strike, T=cfg.horizon)
    pricer = PricerHandle(model=model, option=option, method="analytic")
    grid = TimeGrid(horizon=cfg.horizon, steps=2)
    paths = simulate(model, grid, 2000, "physical", seed=cfg.seed)
    dom = build_domain(paths, 1, option, pricer)
    t = grid.times[1]
    rng = np.random.default_rng(cfg.seed)
    probes = rng.uniform(dom.lo, dom.hi, 2000)
    pairs = []
    for N in (4, 8, 16, 32):
        approx = fit_fixed(lambda s: pricer.value(t, s), dom, N)
        err = max(abs(approx.eval(s) - pricer.value(t, s)) for s in probes)
        pairs.append((N, err))
    slope = np.polyfit(np.log2([p[0] for p in pairs]),
                       np.log10([max(p[1], 1e-300) for p in pairs]), 1)[0]

    # ordered-difference contraction on random pairs
    rng = np.random.default_rng(cfg.seed + 1)
    violations = 0
    trials = 10_000
    for _ in range(trials):
        a = rng.normal(size=20)
        b = rng.normal(size=20)
        d_sorted = np.abs(np.sort(a) - np.sort(b))
        d_raw = np.abs(a - b)
        for p in (1.0, 2.0, np.inf):
            lhs = np.linalg.norm(d_sorted, p)
            rhs = np.linalg.norm(d_raw, p)
            if lhs > rhs + 1e-12:
                violations += 1

    planner = bounds_mod.plan_parameters(bounds_mod.PlannerInput(
        n=cfg.n, kappa=3.0, sigma_rho=1.0, alpha=1.0, beta=1.0, gamma=2.0,
        a=1.0, b=1.0, theta=2.0, c=1.0))

    payload = _manifest(cfg, {
        "digital_example": digital,
        "convergence": {"pairs": pairs, "log10_error_slope_per_doubling": slope},
        "ordered_difference": {"trials": trials, "violations": violations},
        "planner_sample": planner,
    })
    _write_json(out / "diagnostics.json", payload)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy([p[0] for p in pairs], [p[1] for p in pairs], "o-")
    ax.set_xlabel("degree N")
    ax.set_ylabel("max abs error")
    ax.set_title("Chebyshev convergence, BSM call")
    fig.tight_layout()
    fig.savefig(out / "convergence.png", dpi=120)
    plt.close(fig)
    return payload


def run_bench(cfg: RunConfig, out_dir=None,
              n_grid=(1250, 2500, 5000, 10_000)) -> dict:
    """Adaptive-mode speed-up sweep over the number of paths."""
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in n_grid:
        sub = RunConfig(**{**asdict(cfg), "n": n, "mode": "adaptive",
                           "out": str(out / f"n_{n}")})
        manifest = run_experiment(sub, out / f"n_{n}")
        rows.append({"n": n, "speedup": manifest["speedup"],
                     "all_passed": manifest["all_passed"],
                     "degrees": manifest["fit"].get("degrees")})
    lines = ["n,speedup,all_passed"]
    for r in rows:
        lines.append(f"{r['n']},{r['speedup']:.10g},{r['all_passed']}")
    (out / "bench.csv").write_text("\n".join(lines) + "\n")

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([r["n"] for r in rows], [r["speedup"] for r in rows], "o-")
    ax.set_xlabel("paths n")
    ax.set_ylabel("speed-up factor")
    fig.tight_layout()
    fig.savefig(out / "bench.png", dpi=120)
    plt.close(fig)

    payload = _manifest(cfg, {"bench": rows})
    _write_json(out / "bench.json", payload)
    return payload
