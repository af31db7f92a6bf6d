"""Optimal favorable regions for principal eigenvalues with indefinite weight on periodic cells."""

from .design import OptimalDesign, optimize
from .eigen import HabitatClass, classify, lambda1, mu1, survival_threshold
from .grid import IndicatorSet, PeriodicGrid, build_grid
from .limit import competitor_bound, limit_eigenvalue, limit_profile, unit_ball_radius

__version__ = "0.1.0"

__all__ = [
    "HabitatClass", "IndicatorSet", "OptimalDesign", "PeriodicGrid", "build_grid", "classify",
    "competitor_bound", "lambda1", "limit_eigenvalue", "limit_profile", "mu1", "optimize",
    "survival_threshold", "unit_ball_radius",
]
