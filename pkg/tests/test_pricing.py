import numpy as np
import pytest

from chebxva.models import BSM, HSV, MJD, ModelSpec, sp500_bsm
from chebxva.pricing import (NO_EXERCISE, OptionSpec, PricerHandle,
                             exercise_boundary, payoff, price_analytic_bsm,
                             price_binomial_american)


def _bsm(sigma=0.2, r=0.0):
    return ModelSpec(BSM(sigma=sigma), s0=100.0, mu=0.05, r=r)


CALL = OptionSpec(kind="EuropeanCall", K=100.0, T=1.0)
DIGI = OptionSpec(kind="DigitalPut", K=100.0, T=1.0)


def test_analytic_call_reference_value():
    # quadrature oracle of e^{-r tau} E(S_T - K)^+ under the lognormal law
    v = price_analytic_bsm(CALL, 0.2, 0.0, 0.0, 100.0)
    assert v == pytest.approx(7.9656, abs=1e-4)


def test_barrier_far_away_equals_european():
    barrier = OptionSpec(kind="UpAndOutCall", K=100.0, B=1e6 * 100.0, T=1.0)
    v_b = price_analytic_bsm(barrier, 0.2, 0.02, 0.25, 95.0)
    v_e = price_analytic_bsm(CALL, 0.2, 0.02, 0.25, 95.0)
    assert abs(v_b - v_e) < 1e-10


def test_barrier_at_and_beyond_barrier_is_zero():
    barrier = OptionSpec(kind="UpAndOutCall", K=100.0, B=130.0, T=1.0)
    assert price_analytic_bsm(barrier, 0.2, 0.02, 0.5, 130.0) == 0.0
    assert price_analytic_bsm(barrier, 0.2, 0.02, 0.5, 200.0) == 0.0


def test_digital_deep_itm_limit():
    v = price_analytic_bsm(DIGI, 0.2, 0.03, 0.0, 1e-8)
    assert v == pytest.approx(np.exp(-0.03), abs=1e-12)


def test_maturity_rejected():
    with pytest.raises(ValueError):
        price_analytic_bsm(CALL, 0.2, 0.0, 1.0, 100.0)


def test_cos_matches_analytic_bsm():
    model = _bsm(r=0.0)
    cos = PricerHandle(model=model, option=CALL, method="cos")
    ana = PricerHandle(model=model, option=CALL, method="analytic")
    assert abs(cos.value(0.0, 100.0) - ana.value(0.0, 100.0)) < 1e-8


def test_cos_grid_agreement_with_analytic():
    model = sp500_bsm()
    s0 = model.s0
    for option in (OptionSpec(kind="EuropeanCall", K=s0, T=1.0),
                   OptionSpec(kind="DigitalPut", K=s0, T=1.0)):
        cos = PricerHandle(model=model, option=option, method="cos")
        ana = PricerHandle(model=model, option=option, method="analytic")
        for t in (0.1, 0.5, 0.9):
            # >100 (t, s) points overall within [0.5 s0, 2 s0]
            for s in np.linspace(0.5 * s0, 2.0 * s0, 40):
                assert abs(cos.value(t, s) - ana.value(t, s)) < 1e-8


def test_mjd_without_jumps_reduces_to_bsm():
    mjd = ModelSpec(MJD(sigma=0.2, lam=0.0, gamma=0.0, delta=0.1),
                    s0=100.0, mu=0.05, r=0.01)
    cos = PricerHandle(model=mjd, option=CALL, method="cos")
    assert abs(cos.value(0.2, 105.0)
               - price_analytic_bsm(CALL, 0.2, 0.01, 0.2, 105.0)) < 1e-8


def test_hsv_deterministic_variance_reduces_to_bsm():
    sigma = 0.2
    hsv = ModelSpec(HSV(nu0=sigma**2, kappa=1.0, theta=sigma**2, eta=1e-9,
                        rho=0.0), s0=100.0, mu=0.05, r=0.01)
    cos = PricerHandle(model=hsv, option=CALL, method="cos")
    assert abs(cos.value(0.3, (98.0, sigma**2))
               - price_analytic_bsm(CALL, sigma, 0.01, 0.3, 98.0)) < 1e-6


def test_cos_min_terms_rejected():
    with pytest.raises(ValueError):
        PricerHandle(model=_bsm(), option=CALL, method="cos", n_cos=8)


def test_binomial_dominates_european_put():
    from scipy.stats import norm
    sigma, r, K, s, tau = 0.25, 0.04, 100.0, 95.0, 1.0
    d1 = (np.log(s / K) + (r + sigma**2 / 2) * tau) / (sigma * np.sqrt(tau))
    d2 = d1 - sigma * np.sqrt(tau)
    euro_put = K * np.exp(-r * tau) * norm.cdf(-d2) - s * norm.cdf(-d1)
    amer = price_binomial_american(K, sigma, r, 512, 0.0, s, 1.0)
    assert amer >= euro_put - 1e-9


def test_binomial_deep_itm_is_intrinsic():
    v = price_binomial_american(100.0, 0.2, 0.05, 256, 0.0, 5.0, 1.0)
    assert v == pytest.approx(95.0, abs=1e-8)


def test_binomial_self_consistency():
    a = price_binomial_american(100.0, 0.2, 0.05, 512, 0.0, 100.0, 1.0)
    b = price_binomial_american(100.0, 0.2, 0.05, 1024, 0.0, 100.0, 1.0)
    assert abs(a - b) < 1e-3 * abs(b)


def test_boundary_approaches_strike_near_expiry():
    s_star = exercise_boundary(100.0, 0.2, 0.05, 0.9999, 1.0, steps=256)
    assert abs(s_star - 100.0) < 1.0


def test_boundary_no_exercise_at_zero_rate():
    s_star = exercise_boundary(100.0, 0.2, 0.0, 0.5, 1.0, steps=256)
    assert np.isnan(s_star) and np.isnan(NO_EXERCISE)


def test_boundary_monotone_in_time():
    ts = np.linspace(0.1, 0.98, 12)
    bs = [exercise_boundary(100.0, 0.2, 0.05, t, 1.0, steps=128) for t in ts]
    assert all(np.isfinite(bs))
    assert all(b2 >= b1 - 0.5 for b1, b2 in zip(bs, bs[1:]))


def test_delta_asymptotics_and_fd_agreement():
    model = _bsm(sigma=0.2, r=0.01)
    ana = PricerHandle(model=model, option=CALL, method="analytic")
    low_vol = PricerHandle(model=_bsm(sigma=0.05, r=0.01), option=CALL,
                           method="analytic")
    assert low_vol.delta(0.5, 200.0) == pytest.approx(1.0, abs=1e-6)
    assert low_vol.delta(0.5, 40.0) == pytest.approx(0.0, abs=1e-9)
    s = 150.0
    h = 1e-3 * s
    fd = (ana.value(0.0, s + h) - ana.value(0.0, s - h)) / (2 * h)
    d = ana.delta(0.0, s)
    assert abs(d - fd) < 1e-6 * max(abs(d), 1.0)


def test_value_monotonicity_in_spot():
    model = sp500_bsm()
    s_grid = np.linspace(2000.0, 6000.0, 50)
    call = PricerHandle(model=model,
                        option=OptionSpec(kind="EuropeanCall", K=model.s0, T=1.0),
                        method="analytic")
    digi = PricerHandle(model=model,
                        option=OptionSpec(kind="DigitalPut", K=model.s0, T=1.0),
                        method="analytic")
    vc = [call.value(0.5, s) for s in s_grid]
    vd = [digi.value(0.5, s) for s in s_grid]
    assert all(b >= a - 1e-12 for a, b in zip(vc, vc[1:]))
    assert all(b <= a + 1e-12 for a, b in zip(vd, vd[1:]))


def test_payoff_consistency_near_expiry():
    model = _bsm(sigma=0.2, r=0.0)
    ana = PricerHandle(model=model, option=CALL, method="analytic")
    for s in (80.0, 105.0, 130.0):
        assert abs(ana.value(1.0 - 1e-7, s) - payoff(CALL, s)) < 1e-2


def test_pricers_are_pure():
    model = sp500_bsm()
    h = PricerHandle(model=model, option=OptionSpec(kind="EuropeanCall",
                                                    K=model.s0, T=1.0),
                     method="cos")
    assert h.value(0.4, 3900.0) == h.value(0.4, 3900.0)


def test_unsupported_combination_rejected():
    model = sp500_bsm()
    with pytest.raises(ValueError):
        PricerHandle(model=model,
                     option=OptionSpec(kind="AmericanPut", K=model.s0, T=1.0),
                     method="analytic")
