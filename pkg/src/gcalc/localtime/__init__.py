"""Local time of the G-Brownian motion: estimators and identity checks."""

from .convex import ConvexSpec, convex_ito_check, convex_ito_residuals
from .estimators import (
    LocalTimeField,
    MollifierSpec,
    abs_shift,
    fit_exponent,
    holder_exponent,
    level_increments,
    level_moduli,
    local_time_field,
    mollifier,
    phi_eps,
    phi_eps_prime,
    phi_eps_second,
    sgn,
    tanaka_local_time,
    tanaka_residual,
    window_local_time,
)
from .occupation import (
    DeltaBoundReport,
    FubiniReport,
    OccupationReport,
    QVReport,
    delta_bound_check,
    dyadic_levels,
    occupation_check,
    qv_of_local_time,
    stochastic_fubini_check,
    trapezoid_weights,
)

__all__ = [
    "ConvexSpec",
    "DeltaBoundReport",
    "FubiniReport",
    "LocalTimeField",
    "MollifierSpec",
    "OccupationReport",
    "QVReport",
    "abs_shift",
    "convex_ito_check",
    "convex_ito_residuals",
    "delta_bound_check",
    "dyadic_levels",
    "fit_exponent",
    "holder_exponent",
    "level_increments",
    "level_moduli",
    "local_time_field",
    "mollifier",
    "occupation_check",
    "phi_eps",
    "phi_eps_prime",
    "phi_eps_second",
    "qv_of_local_time",
    "sgn",
    "stochastic_fubini_check",
    "tanaka_local_time",
    "tanaka_residual",
    "trapezoid_weights",
    "window_local_time",
]
