import numpy as np
import pytest

from chebxva.models import (BSM, HSV, MJD, ModelSpec, PathSet, TimeGrid,
                            simulate, sp500_bsm, sp500_hsv, sp500_mjd)

GRID = TimeGrid(horizon=1.0, steps=52)


def test_degenerate_sigma_zero_is_deterministic():
    model = ModelSpec(BSM(sigma=0.0), s0=100.0, mu=0.11, r=0.01)
    paths = simulate(model, TimeGrid(horizon=1.0, steps=1), 20, "physical", seed=1)
    assert np.allclose(paths.prices(1), 100.0 * np.exp(0.11), rtol=0, atol=1e-10)


def test_bsm_physical_terminal_mean():
    model = sp500_bsm()
    paths = simulate(model, GRID, 100_000, "physical", seed=2)
    sT = paths.prices(52)
    se = sT.std(ddof=1) / np.sqrt(len(sT))
    assert abs(sT.mean() - model.s0 * np.exp(0.11)) < 3 * se


@pytest.mark.parametrize("factory", [sp500_bsm, sp500_mjd, sp500_hsv])
def test_risk_neutral_martingale(factory):
    model = factory()
    paths = simulate(model, GRID, 100_000, "risk-neutral", seed=3)
    disc = np.exp(-model.r * GRID.horizon) * paths.prices(52)
    se = disc.std(ddof=1) / np.sqrt(len(disc))
    assert abs(disc.mean() - model.s0) < 3 * se


def test_reproducibility_bit_identical():
    model = sp500_mjd()
    a = simulate(model, GRID, 500, "physical", seed=11)
    b = simulate(model, GRID, 500, "physical", seed=11)
    assert np.array_equal(a.states, b.states)


def test_path_prefix_stable_in_n():
    model = sp500_bsm()
    small = simulate(model, GRID, 50, "physical", seed=4)
    large = simulate(model, GRID, 200, "physical", seed=4)
    assert np.array_equal(small.states, large.states[:50])


def test_positivity_and_variance_floor():
    paths = simulate(sp500_hsv(), GRID, 2000, "physical", seed=5)
    assert np.all(paths.states[:, :, 0] > 0)
    assert np.all(paths.states[:, :, 1] >= 0)


def test_initial_state_pinned():
    model = sp500_hsv()
    paths = simulate(model, GRID, 100, "risk-neutral", seed=6)
    assert np.allclose(paths.prices(0), model.s0)
    assert np.allclose(paths.variances(0), model.dynamics.nu0)


def test_invalid_inputs_rejected():
    model = sp500_bsm()
    with pytest.raises(ValueError):
        simulate(model, GRID, 0, "physical", seed=1)
    with pytest.raises(ValueError):
        TimeGrid(horizon=-1.0, steps=52)
    with pytest.raises(ValueError):
        MJD(sigma=0.1, lam=-1.0, gamma=0.0, delta=0.1)
    with pytest.raises(ValueError):
        HSV(nu0=0.05, kappa=1.0, theta=0.05, eta=0.5, rho=-2.0)


def test_csv_roundtrip(tmp_path):
    paths = simulate(sp500_hsv(), TimeGrid(horizon=0.5, steps=4), 30,
                     "risk-neutral", seed=9)
    target = tmp_path / "paths.csv"
    paths.save_csv(target)
    back = PathSet.load_csv(target)
    assert np.allclose(back.states, paths.states)
    assert back.seed == paths.seed
    assert back.measure == paths.measure
    assert back.grid.steps == paths.grid.steps


def test_states_write_protected():
    paths = simulate(sp500_bsm(), TimeGrid(horizon=1.0, steps=2), 10,
                     "physical", seed=1)
    with pytest.raises((ValueError, RuntimeError)):
        paths.states[0, 0, 0] = 0.0
