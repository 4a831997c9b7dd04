"""CVA delta, ISDA initial margin and MVA."""

import math

import numpy as np
import pytest

from chebxva import (
    BSM,
    FundingSpread,
    ModelSpec,
    OptionSpec,
    PDCurve,
    PathSet,
    PricerHandle,
    TimeGrid,
    conditional_step,
    cva_delta_mc,
    isda_im,
    make_delta_analytic,
    mva_isda,
    simulate,
)

RNG = np.random.default_rng(7)


def flat_paths(s0=100.0, n=4, m=3):
    states = np.full((n, m + 1, 1), s0)
    return PathSet(grid=TimeGrid(1.0, m), states=states, seed=0)


def unit_delta(u, s):
    return np.ones_like(np.asarray(s, dtype=float))


# -------------------------------------------------------------------------
# curves
# -------------------------------------------------------------------------

def test_pd_curve_uniform_and_none():
    pd = PDCurve(horizon=2.0)
    assert pd(0.0) == 0.0
    assert pd(1.0) == 0.5
    assert pd(5.0) == 1.0
    assert PDCurve(horizon=1.0, variant="none")(0.7) == 0.0
    with pytest.raises(ValueError):
        PDCurve(horizon=0.0)


def test_funding_spread():
    assert FundingSpread()(0.3) == 0.01
    assert FundingSpread(0.02)(0.9) == 0.02
    with pytest.raises(ValueError):
        FundingSpread(-0.01)


# -------------------------------------------------------------------------
# CVA delta
# -------------------------------------------------------------------------

def test_cva_zero_when_pd_constant():
    paths = flat_paths()
    assert cva_delta_mc(paths, unit_delta, PDCurve(1.0, "none"), r=0.05) == 0.0


def test_cva_exact_for_flat_paths_unit_delta():
    # s = s0 everywhere, delta = 1, r = 0, uniform PD on [0,1]:
    # each step contributes (1/m) * 1 * 1, so the total is 1
    paths = flat_paths(m=4)
    val = cva_delta_mc(paths, unit_delta, PDCurve(1.0), r=0.0)
    assert val == pytest.approx(1.0)


def test_cva_discounting():
    paths = flat_paths(m=2)
    r = 0.1
    val = cva_delta_mc(paths, unit_delta, PDCurve(1.0), r=r)
    expected = 0.5 * (math.exp(-r * 0.5) + math.exp(-r * 1.0))
    assert val == pytest.approx(expected)


def test_cva_linear_in_delta():
    model = ModelSpec(BSM(0.2), s0=100.0, mu=0.05, r=0.01)
    paths = simulate(model, TimeGrid(1.0, 4), n=50, seed=3)
    pd = PDCurve(1.0)
    d1 = lambda u, s: 0.3 * np.asarray(s) / 100.0
    d2 = lambda u, s: 0.9 * np.asarray(s) / 100.0
    assert cva_delta_mc(paths, d2, pd, r=0.01) == pytest.approx(
        3.0 * cva_delta_mc(paths, d1, pd, r=0.01))


def test_cva_per_path_mean_matches():
    model = ModelSpec(BSM(0.2), s0=100.0, mu=0.05, r=0.01)
    paths = simulate(model, TimeGrid(1.0, 4), n=64, seed=9)
    pricer = PricerHandle(model=model,
                          option=OptionSpec("EuropeanCall", K=100.0, T=1.0),
                          method="analytic")
    fn = make_delta_analytic(pricer, paths.grid)
    est, per_path = cva_delta_mc(paths, fn, PDCurve(1.0), r=0.01,
                                 return_per_path=True)
    assert per_path.shape == (64,)
    assert est == pytest.approx(per_path.mean())


def test_cva_rejects_two_dim_paths():
    from chebxva import sp500_hsv
    paths = simulate(sp500_hsv(), TimeGrid(1.0, 2), n=4, seed=0)
    with pytest.raises(ValueError):
        cva_delta_mc(paths, unit_delta, PDCurve(1.0), r=0.01)


# -------------------------------------------------------------------------
# ISDA IM
# -------------------------------------------------------------------------

def test_im_zero_when_delta_zero():
    states = np.array([100.0, 110.0])
    inner = RNG.normal(100.0, 5.0, (2, 500))
    im, clamped = isda_im(states, inner, np.zeros(2), alpha=0.99)
    assert np.array_equal(im, np.zeros(2))
    assert not clamped


def test_im_deterministic_increments():
    # every inner sample moves the state by exactly +2: IM = delta * 2
    states = np.array([100.0, 50.0])
    inner = states[:, None] + 2.0 * np.ones((2, 200))
    im, _ = isda_im(states, inner, np.array([0.7, -0.3]), alpha=0.9)
    assert im == pytest.approx([1.4, -0.6])


def test_im_is_pl_quantile():
    # independent oracle: alpha-quantile of the explicit P&L sample
    states = np.array([100.0])
    inner = 100.0 + RNG.normal(0.0, 3.0, (1, 1000))
    delta = 1.7
    im, _ = isda_im(states, inner, np.array([delta]), alpha=0.99)
    pl = np.sort(delta * (inner[0] - 100.0))
    assert im[0] == pl[int(np.floor(1000 * 0.99))]


def test_im_positive_homogeneous_in_delta():
    states = np.array([100.0])
    inner = 100.0 + RNG.normal(0.0, 3.0, (1, 400))
    im1, _ = isda_im(states, inner, np.array([1.0]), alpha=0.95)
    im3, _ = isda_im(states, inner, np.array([3.0]), alpha=0.95)
    assert im3[0] == pytest.approx(3.0 * im1[0])


def test_im_clamps_small_inner_sample():
    states = np.array([100.0])
    inner = 100.0 + RNG.normal(0.0, 1.0, (1, 50))   # 50 < 1/(1-0.99)
    with pytest.warns(UserWarning, match="clamped"):
        im, clamped = isda_im(states, inner, np.array([1.0]), alpha=0.99)
    assert clamped
    assert im[0] == pytest.approx(np.max(inner[0] - 100.0))


def test_im_rejects_bad_alpha():
    with pytest.raises(ValueError):
        isda_im(np.array([1.0]), np.ones((1, 10)), np.array([1.0]), alpha=1.0)


# -------------------------------------------------------------------------
# conditional inner step
# -------------------------------------------------------------------------

def test_conditional_step_martingale():
    model = ModelSpec(BSM(0.3), s0=100.0, mu=0.2, r=0.05)
    states = np.array([80.0, 120.0])
    dt = 10.0 / 252.0
    out = conditional_step(model, states, dt, 200_000,
                           np.random.default_rng(0))
    target = states * math.exp(model.r * dt)  # risk-neutral drift, not mu
    se = states * model.dynamics.sigma * math.sqrt(dt) / math.sqrt(200_000)
    assert np.all(np.abs(out.mean(axis=1) - target) < 4 * se)


def test_conditional_step_shapes():
    from chebxva import sp500_hsv, sp500_mjd
    dt = 0.01
    mjd = conditional_step(sp500_mjd(), np.array([100.0, 90.0]), dt, 64,
                           np.random.default_rng(1))
    assert mjd.shape == (2, 64)
    hsv = conditional_step(sp500_hsv(), np.array([[100.0, 0.04], [90.0, 0.09]]),
                           dt, 64, np.random.default_rng(2))
    assert hsv.shape == (2, 64)
    assert np.all(hsv > 0)


# -------------------------------------------------------------------------
# MVA
# -------------------------------------------------------------------------

def test_mva_zero_funding_spread():
    model = ModelSpec(BSM(0.2), s0=100.0, mu=0.05, r=0.01)
    paths = simulate(model, TimeGrid(1.0, 3), n=16, seed=1)
    val = mva_isda(paths, unit_delta, FundingSpread(0.0), model=model,
                   inner_paths=200, alpha=0.95)
    assert val == 0.0


def test_mva_linear_value_exact():
    # V(s) = s has delta 1; a deterministic inner sampler that moves the
    # state by +3 makes IM = 3 at every time, so MVA = FS * T * 3
    paths = flat_paths(m=5)
    sampler = lambda t, s, rng: np.asarray(s)[:, None] + 3.0 * np.ones((len(s), 101))
    val = mva_isda(paths, unit_delta, FundingSpread(0.01), alpha=0.99,
                   inner_sampler=sampler)
    assert val == pytest.approx(0.01 * 1.0 * 3.0)


def test_mva_seed_determinism():
    model = ModelSpec(BSM(0.2), s0=100.0, mu=0.05, r=0.01)
    paths = simulate(model, TimeGrid(1.0, 3), n=32, seed=5)
    kw = dict(fs=FundingSpread(0.01), model=model, inner_paths=500,
              alpha=0.99, inner_seed=7)
    assert mva_isda(paths, unit_delta, **kw) == mva_isda(paths, unit_delta, **kw)
    assert mva_isda(paths, unit_delta, **{**kw, "inner_seed": 8}) != \
        mva_isda(paths, unit_delta, **kw)


def test_mva_per_path_mean_matches():
    model = ModelSpec(BSM(0.2), s0=100.0, mu=0.05, r=0.01)
    paths = simulate(model, TimeGrid(1.0, 3), n=24, seed=6)
    est, per_path = mva_isda(paths, unit_delta, FundingSpread(0.01),
                             model=model, inner_paths=300, alpha=0.95,
                             return_per_path=True)
    assert per_path.shape == (24,)
    assert est == pytest.approx(per_path.mean())


def test_mva_requires_model_or_sampler():
    paths = flat_paths()
    with pytest.raises(ValueError):
        mva_isda(paths, unit_delta, FundingSpread(0.01))


# -------------------------------------------------------------------------
# delta factories
# -------------------------------------------------------------------------

def test_terminal_delta_is_exercise_indicator():
    model = ModelSpec(BSM(0.2), s0=100.0, mu=0.05, r=0.01)
    grid = TimeGrid(1.0, 2)
    pricer = PricerHandle(model=model,
                          option=OptionSpec("EuropeanCall", K=100.0, T=1.0),
                          method="analytic")
    fn = make_delta_analytic(pricer, grid)
    out = fn(2, np.array([90.0, 100.0, 110.0]))
    assert np.array_equal(out, [0.0, 0.0, 1.0])
    # interior times use the smooth closed-form delta
    mid = fn(1, np.array([100.0]))
    assert 0.0 < mid[0] < 1.0


def test_chebyshev_delta_matches_analytic():
    from chebxva import build_domain, fit_fixed, make_delta_chebyshev
    model = ModelSpec(BSM(0.2), s0=100.0, mu=0.05, r=0.01)
    opt = OptionSpec("EuropeanCall", K=100.0, T=1.0)
    pricer = PricerHandle(model=model, option=opt, method="analytic")
    paths = simulate(model, TimeGrid(1.0, 4), n=300, seed=13)
    approxs = []
    for u in range(1, 4):
        dom = build_domain(paths, u, opt, pricer)
        t = paths.grid.times[u]
        approxs.append(fit_fixed(lambda s: pricer.value(t, s), dom, N=32))
    cheb_fn = make_delta_chebyshev(approxs, paths.grid, opt)
    ana_fn = make_delta_analytic(pricer, paths.grid)
    for u in (1, 2, 3):
        s = paths.prices(u)
        assert np.max(np.abs(cheb_fn(u, s) - ana_fn(u, s))) < 1e-5
    s4 = paths.prices(4)
    assert np.array_equal(cheb_fn(4, s4), ana_fn(4, s4))
