"""Multiple positive radial solutions of nonlinear field equations.

The solver isolates each negative well of the nonlinear term, truncates the
term above the well and minimizes the resulting functional on the relevant
constraint inside a localized open set.  Every solution is checked against
the strong equation, a scaling identity and the maximum-principle bound.
"""

from .certify import SolutionCertificate, Thresholds, certify, el_residual, shooting_oracle
from .functionals import Kind, ProblemSpec
from .minimizer import SolveOptions, Status, WellSolveResult, find_all, minimize_in_well, threshold_scan
from .nonlinearity import Nonlinearity, detect_wells, factored, poly_s2, power_well, truncate
from .radial_grid import RadialGrid, RadialProfile, build_grid, bump

__all__ = [
    "Kind", "Nonlinearity", "ProblemSpec", "RadialGrid", "RadialProfile", "SolutionCertificate", "SolveOptions",
    "Status", "Thresholds", "WellSolveResult", "build_grid", "bump", "certify", "detect_wells", "el_residual",
    "factored", "find_all", "minimize_in_well", "poly_s2", "power_well", "shooting_oracle", "threshold_scan",
    "truncate",
]
__version__ = "0.1.0"
