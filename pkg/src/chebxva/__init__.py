"""Chebyshev-accelerated counterparty credit exposure and XVA engine.

The package replaces expensive reference pricers inside simulation-based
exposure calculations with piecewise Chebyshev interpolants fitted on
path-induced domains, and ships the supporting estimators, error-bound
diagnostics and XVA applications.
"""

from .models import (BSM, HSV, MJD, ModelSpec, PathSet, TimeGrid, simulate,
                     sp500_bsm, sp500_hsv, sp500_mjd)
from .pricing import (NO_EXERCISE, OptionSpec, PricerHandle,
                      exercise_boundary, payoff, price_analytic_bsm,
                      price_binomial_american, price_cos)
from .chebyshev import (AdaptiveResult, ChebDomain, ChebyshevApproximant,
                        DegreeCapError, OutOfDomainError, TailFormula,
                        adaptive_fit, build_domain, cheb_error_estimate,
                        cheb_fit, cheb_nodes, clenshaw, derivative_coeffs,
                        fit_fixed)
from .exposure import (ExposureCube, MeasureResult, MeasureSpec,
                       ProfileReport, accelerated_reeval, apply_masking,
                       compute_boundaries, full_reeval, measure,
                       measure_generic, measure_weights, profile_and_compare,
                       speedup, value_cap)
from .xva import (FundingSpread, PDCurve, conditional_step, cva_delta_mc,
                  isda_im, make_delta_analytic, make_delta_chebyshev,
                  mva_isda)
from .bounds import (GapReport, PlannerInfeasibleError, PlannerInput,
                     digital_example, digital_risk_factor, digital_value_u,
                     digital_value_v, finite_sample_bound_check,
                     lp_bound_eval, plan_parameters, uniform_gap)
from .experiments import (RunConfig, load_config, run_bench, run_diagnostics,
                          run_experiment, run_xva)

__version__ = "0.1.0"
