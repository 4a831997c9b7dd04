"""End-to-end runs through the command-line interface."""

import json
import subprocess
import sys

import numpy as np
import pytest

from chebxva import PathSet, RunConfig, load_config
from chebxva.cli import main


def write_config(path, **overrides):
    base = dict(model="bsm", option="european_call", method="analytic",
                n=100, m=4, horizon=1.0, seed=5, degree=8, alpha=0.9,
                measures=["EE", "PFE"], threads=1)
    base.update(overrides)
    import yaml
    path.write_text(yaml.safe_dump(base))
    return path


def test_simulate_writes_csv(tmp_path):
    cfg = write_config(tmp_path / "cfg.yaml", n=120, m=3)
    rc = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 0
    paths = PathSet.load_csv(tmp_path / "o" / "paths.csv")
    assert paths.n == 120
    assert paths.grid.steps == 3
    assert np.all(paths.prices() > 0)


def test_exposure_run_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.yaml")
    out = tmp_path / "run"
    rc = main(["exposure", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "speed-up" in printed
    assert "eps=" in printed

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["n"] == 100
    assert manifest["speedup"] > 0
    assert {row["measure"] for row in manifest["error_table"]} == {"EE", "PFE[0.9]"}

    csv_lines = (out / "profiles.csv").read_text().strip().splitlines()
    assert csv_lines[0].split(",") == ["u", "t", "measure", "estimate_full",
                                       "estimate_accel", "ci_halfwidth"]
    assert len(csv_lines) == 1 + 4 * 2  # m times x two measures
    assert (out / "profiles.png").stat().st_size > 0
    # interpolants for the interior times are persisted and reloadable
    from chebxva import ChebyshevApproximant
    a = ChebyshevApproximant.load(out / "approximants" / "u_001.bin")
    assert a.degree == 8


def test_adaptive_subcommand_switches_mode(tmp_path):
    cfg = write_config(tmp_path / "cfg.yaml", n=150, m=3)
    out = tmp_path / "run"
    assert main(["adaptive", "--config", str(cfg), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["mode"] == "adaptive"
    assert manifest["fit"]["target"] > 0


def test_diagnostics_outputs(tmp_path):
    out = tmp_path / "diag"
    assert main(["diagnostics", "--out", str(out)]) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["digital_example"]["pfe_x"] == pytest.approx(0.2666, abs=5e-4)
    slope = diag["convergence"]["log10_error_slope_per_doubling"]
    assert slope <= -0.5
    assert (out / "convergence.png").stat().st_size > 0
    assert diag["ordered_difference"]["violations"] == 0


def test_cli_seed_override_and_reproducibility(tmp_path):
    cfg = write_config(tmp_path / "cfg.yaml")
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    main(["exposure", "--config", str(cfg), "--seed", "99", "--out", str(out_a)])
    main(["exposure", "--config", str(cfg), "--seed", "99", "--out", str(out_b)])
    ma = json.loads((out_a / "manifest.json").read_text())
    mb = json.loads((out_b / "manifest.json").read_text())
    assert ma["seed"] == mb["seed"] == 99
    # identical up to wall-clock and output-path fields
    for m in (ma, mb):
        m.pop("timings")
        m.pop("hardware")
        m["config"].pop("out")
        m["speedup"] = None
    assert ma == mb
    assert (out_a / "profiles.csv").read_text() == (out_b / "profiles.csv").read_text()


def test_load_config_roundtrip(tmp_path):
    cfg_path = write_config(tmp_path / "cfg.yaml", n=256, measures=["EE", "CES"])
    cfg = load_config(cfg_path)
    assert cfg.n == 256
    assert cfg.measures == ("EE", "CES")
    assert isinstance(cfg, RunConfig)


def test_cli_module_entrypoint(tmp_path):
    out = subprocess.run([sys.executable, "-m", "chebxva.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    for name in ("simulate", "exposure", "adaptive", "xva", "diagnostics",
                 "bench"):
        assert name in out.stdout


def test_cli_rejects_bad_config(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: nonsense\n")
    with pytest.raises(ValueError):
        main(["exposure", "--config", str(bad), "--out", str(tmp_path / "x")])
