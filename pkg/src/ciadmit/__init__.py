"""Risk evaluation and admissibility checks for confidence intervals in regression."""

__version__ = "0.1.0"

from .compromise import (
    CompromiseResult,
    DominanceVerdict,
    dominance_check,
    dominance_search,
    ell,
    lambda_star,
    minimize_r,
    minimize_tilde_q,
    r_prime,
    tilde_q,
)
from .design import DesignProblem, Geometry, SufficientStats, compute_geometry, fit_least_squares, sufficient_stats
from .intervals import (
    BSFunctions,
    IntervalRealization,
    evaluate_interval,
    naive_pretest,
    pointwise_length_compare,
    smooth_mixture,
    usual_interval,
    validate_F_d,
)
from .mcsim import McEstimate, simulate_from_design, simulate_risk
from .numerics import QuadratureSpec, expected_W, f_W, Phi, phi, psi, t_quantile, z_quantile
from .risk import RiskCurve, RiskPoint, g_objective, integral_r1_closed, integral_r2, r1, r2, risk_curve
