"""Linear-quadratic mean-field solvers for optical beam tracking.

Competitive (Nash) and cooperative (social-optimum) strategies for a
population of transceivers whose pointing assemblies are coupled through a
mean term: backward Riccati/value integration, a damped fixed-point and a
Newton solver for the coupled forward/backward mean-costate pair, payoff and
price-of-anarchy evaluation, and Monte-Carlo validation of the mean-field
approximation on the finite-N closed loop.
"""

from .costs import (CostEstimate, PayoffReport, conjugate_weights_by_output,
                    deterministic_mean_cost, empirical_cost, mfc_payoff,
                    mfg_payoff, optimal_mean_control, payoff_report,
                    price_of_anarchy, value_function)
from .errors import (AsymmetricWeight, BadGrid, BlowUp, DimensionMismatch,
                     GridMismatch, InsufficientAgents, MfbeamError,
                     NoConvergence, NonPositiveDenominator, NotPositiveDefinite,
                     SingularSystem)
from .fbsolver import (DiscreteSystem, MeanFieldPair, MeanFieldSolution,
                       SolveMethod, Variant, assemble, chi_coupling,
                       feedback_control, solve_dense, solve_fixed_point,
                       solve_mean_field, solve_newton)
from .model import (LosSystem, MfProblem, OpticalLink, PointingSystem,
                    TimeGrid, attenuation_factor, augment, received_intensity,
                    tracking_error, trajectory_l2_norm, validate_problem)
from .riccati import RiccatiSolution, solve_riccati, solve_zeta
from .simulator import (Ensemble, TrackingSeries, empirical_mean,
                        integrate_paths, mean_consistency_error,
                        simulate_ensemble, tracking_timeseries)

__version__ = "0.1.0"

__all__ = [
    "AsymmetricWeight", "BadGrid", "BlowUp", "CostEstimate", "DimensionMismatch",
    "DiscreteSystem", "Ensemble", "GridMismatch", "InsufficientAgents",
    "LosSystem", "MeanFieldPair", "MeanFieldSolution", "MfProblem", "MfbeamError",
    "NoConvergence", "NonPositiveDenominator", "NotPositiveDefinite",
    "OpticalLink", "PayoffReport", "PointingSystem", "RiccatiSolution",
    "SingularSystem", "SolveMethod", "TimeGrid", "TrackingSeries", "Variant",
    "assemble", "attenuation_factor", "augment", "chi_coupling",
    "conjugate_weights_by_output", "deterministic_mean_cost", "empirical_cost",
    "empirical_mean", "feedback_control", "integrate_paths",
    "mean_consistency_error", "mfc_payoff", "mfg_payoff", "optimal_mean_control",
    "payoff_report", "price_of_anarchy", "received_intensity",
    "simulate_ensemble", "solve_dense", "solve_fixed_point", "solve_mean_field",
    "solve_newton", "solve_riccati", "solve_zeta", "tracking_error",
    "tracking_timeseries", "trajectory_l2_norm", "validate_problem",
    "value_function",
]
