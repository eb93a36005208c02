"""Transient piezoelectric/acoustic scattering in 2D.

Finite elements in the solid, Galerkin boundary elements for the
surrounding fluid, and BDF2 convolution quadrature in time with all
time steps solved at once as independent frequency-domain problems.
"""

__version__ = "0.1.0"

from .coupler import (  # noqa: E402
    NORM_COLUMNS, Discretization, Problem, SimulationResult, discretize, norm_operators,
    norm_timeseries, solve_scenario,
)
from .cq import CqScheme, convolve_transfer, weighted_dft  # noqa: E402
from .incident import Grounding, IncidentWave, smooth_heaviside  # noqa: E402
from .material import PiezoMaterial, benchmark_material  # noqa: E402
from .mesh import TriMesh, load_mesh, save_mesh  # noqa: E402
from .scenarios import build_scenario, builtin_geometry, make_problem, preset_config, read_config  # noqa: E402

__all__ = [
    "NORM_COLUMNS", "CqScheme", "Discretization", "Grounding", "IncidentWave", "PiezoMaterial", "Problem",
    "SimulationResult", "TriMesh", "build_scenario", "builtin_geometry", "convolve_transfer", "discretize",
    "load_mesh", "make_problem", "norm_operators", "norm_timeseries", "benchmark_material", "preset_config",
    "read_config", "save_mesh", "smooth_heaviside", "solve_scenario", "weighted_dft",
]
