"""Command-line interface.

Subcommands: simulate | exposure | adaptive | xva | diagnostics | bench.
Common flags: --config PATH (YAML run config), --seed INT, --threads INT,
--out DIR. Outputs use '.'-decimal CSV, JSON manifests and PNG figures.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .experiments import (RunConfig, load_config, run_bench, run_diagnostics,
                          run_experiment, run_xva)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chebxva",
        description="Chebyshev-accelerated counterparty exposure engine")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "simulate risk-factor paths and write them to CSV"),
        ("exposure", "full vs accelerated exposure run with fixed degree"),
        ("adaptive", "exposure run with the adaptive degree algorithm"),
        ("xva", "CVA delta and ISDA MVA, analytic vs Chebyshev deltas"),
        ("diagnostics", "theory diagnostics and the tractable example"),
        ("bench", "adaptive speed-up sweep over path counts"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None,
                       help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="cap worker threads (also exported to BLAS pools)")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory")
    return parser


def _config_from(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.threads is not None:
        updates["threads"] = args.threads
    if args.out is not None:
        updates["out"] = str(args.out)
    if updates:
        cfg = RunConfig(**{**asdict(cfg), **updates})
    return cfg


def _cap_threads(threads: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(threads))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = _config_from(args)
    _cap_threads(cfg.threads)
    out = Path(cfg.out)

    if args.command == "simulate":
        from .models import TimeGrid, simulate

        grid = TimeGrid(horizon=cfg.horizon, steps=cfg.m)
        paths = simulate(cfg.model_spec(), grid, cfg.n, "physical",
                         seed=cfg.seed)
        out.mkdir(parents=True, exist_ok=True)
        target = out / "paths.csv"
        paths.save_csv(target)
        print(f"wrote {target} ({cfg.n} paths, {cfg.m} steps)")
        return 0

    if args.command == "exposure":
        manifest = run_experiment(cfg, out)
    elif args.command == "adaptive":
        cfg = RunConfig(**{**asdict(cfg), "mode": "adaptive"})
        manifest = run_experiment(cfg, out)
    elif args.command == "xva":
        manifest = run_xva(cfg, out)
    elif args.command == "diagnostics":
        manifest = run_diagnostics(cfg, out)
    elif args.command == "bench":
        manifest = run_bench(cfg, out)
    else:  # pragma: no cover
        raise AssertionError(args.command)

    if "error_table" in manifest:
        for row in manifest["error_table"]:
            status = "pass" if row["passed"] else "FAIL"
            print(f"{row['measure']:>10}: eps={row['epsilon']:.3e} "
                  f"mc={row['epsilon_mc']:.3e} u*={row['u_star']:d} [{status}]")
        print(f"speed-up: {manifest['speedup']:.1f}")
    print(f"reports written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
