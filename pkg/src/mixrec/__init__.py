"""Predictive recursion for mixing densities from sequential, possibly dependent data."""
from .kernels import Kernel, drift, gaussian, marginal
from .recursion import (FitTrace, Truth, WeightSchedule, harmonic, marginal_step_check,
                        power, pr_fit, pr_step, weight)
from .support import (MixingDensity, SupportGrid, discrete_grid, normalize, parse_grid,
                      product_grid, uniform_density, uniform_grid)

__version__ = "0.1.0"

__all__ = [
    "FitTrace", "Kernel", "MixingDensity", "SupportGrid", "Truth", "WeightSchedule",
    "discrete_grid", "drift", "gaussian", "harmonic", "marginal", "marginal_step_check",
    "normalize", "parse_grid", "power", "pr_fit", "pr_step", "product_grid",
    "uniform_density", "uniform_grid", "weight",
]
