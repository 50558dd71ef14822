"""Joint choice of experimental sample size and survey covariates under a budget."""

__version__ = "0.1.0"

from .cost import (Blocked, Clustered, Clusters, Flat, Individuals, SizeGrid, StepFunction, Survey,
                   max_feasible_size, preset, step_lookup, survey_time, total_cost)
from .data import GroupSpec, PreSample, define_groups, load_csv, stack_multivariate, studentize
from .evaluate import (PowerSpec, analytic_k_fixedcost, analytic_k_uniform, design, eqb,
                       foc_check_heterogeneous, kfold_evaluate, mse, power)
from .regress import ols, orthonormalize_group, residual_variance, residualize_outcome
from .selector_lasso import lasso_budget, lasso_design, lasso_fit
from .selector_oga import Selection, oga_design, oga_inner, risk_gap
from .sim import SimConfig, make_gamma, run_mc, simulate_pre

__all__ = [
    "Blocked", "Clustered", "Clusters", "Flat", "GroupSpec", "Individuals", "PowerSpec", "PreSample",
    "Selection", "SimConfig", "SizeGrid", "StepFunction", "Survey", "analytic_k_fixedcost",
    "analytic_k_uniform", "define_groups", "design", "eqb", "foc_check_heterogeneous",
    "kfold_evaluate", "lasso_budget", "lasso_design", "lasso_fit", "load_csv", "make_gamma",
    "max_feasible_size", "mse", "ols", "oga_design", "oga_inner", "orthonormalize_group", "power",
    "preset", "residual_variance", "residualize_outcome", "risk_gap", "run_mc", "simulate_pre",
    "stack_multivariate", "step_lookup", "studentize", "survey_time", "total_cost",
]
