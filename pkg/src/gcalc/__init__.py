"""Numerical stochastic calculus for the G-Brownian motion.

Sublinear expectations over volatility controls, a G-heat equation oracle,
local time estimators and empirical checks of the Tanaka, occupation-time,
local-time quadratic variation and convex Ito formulas.
"""

from .core import (
    EstimationError,
    GParams,
    SeedSpec,
    TimeGrid,
    ValidationError,
    g_function,
    make_grid,
    normal_stream,
)
from .sampler import ControlPath, SamplePath, constant_control, ito_sum, qv_from_increments, sample_path, sample_paths

__version__ = "0.1.0"

__all__ = [
    "ControlPath",
    "EstimationError",
    "GParams",
    "SamplePath",
    "SeedSpec",
    "TimeGrid",
    "ValidationError",
    "constant_control",
    "g_function",
    "ito_sum",
    "make_grid",
    "normal_stream",
    "qv_from_increments",
    "sample_path",
    "sample_paths",
]
