"""Optimal investment/consumption on mean-reverting spread markets.

Closed-form dynamic-programming solution for log utility, strategy
construction, exact and Euler path simulation, and Monte Carlo / PDE
residual verification of optimality.
"""

from .config import RunConfig, load_config, parse_config
from .hjb import (
    HjbSolution,
    compute_f,
    hamilton_h0,
    hamilton_max,
    hjb_residual,
    residual_batch,
    solve,
    solve_g_expint,
    solve_g_ode,
    value_z,
)
from .model import DerivedMatrices, ModelParams, ou_transition, validate
from .sim import (
    DominanceReport,
    McEstimate,
    PathBundle,
    SpreadPaths,
    dominance_test,
    estimate_objective,
    simulate_spread,
    simulate_wealth,
)
from .strategy import Strategy, baseline, optimal_strategy, optimal_wealth_coeffs, parse_strategy

__all__ = [
    "RunConfig",
    "load_config",
    "parse_config",
    "ModelParams",
    "DerivedMatrices",
    "validate",
    "ou_transition",
    "HjbSolution",
    "solve",
    "solve_g_ode",
    "solve_g_expint",
    "compute_f",
    "value_z",
    "hamilton_h0",
    "hamilton_max",
    "hjb_residual",
    "residual_batch",
    "Strategy",
    "optimal_strategy",
    "baseline",
    "parse_strategy",
    "optimal_wealth_coeffs",
    "SpreadPaths",
    "PathBundle",
    "McEstimate",
    "DominanceReport",
    "simulate_spread",
    "simulate_wealth",
    "estimate_objective",
    "dominance_test",
]

__version__ = "0.1.0"
