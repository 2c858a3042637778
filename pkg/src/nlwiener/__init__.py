"""Discrete experiments for boundary regularity of nonlocal nonlinear
operators: pair-weight discretisations of fractional p-energies, a
constrained minimisation solver, capacities, Wolff and Wiener quantities,
regularity probes and randomised checks of the supporting inequalities.
"""

__version__ = "0.1.0"

from .grid_kernel import (  # noqa: E402
    CoefficientKernel,
    Grid,
    NodeSet,
    PairWeightMatrix,
    Params,
    StandardKernel,
    assemble_weights,
    build_grid,
    node_set,
)
from .energy import (  # noqa: E402
    ConstantFarField,
    DiscreteFunction,
    RadialPowerFarField,
    ZeroFarField,
    energy_form,
    gagliardo_seminorm_p,
    phi_average,
    tail,
)
from .solver import ConvergenceError, DirichletProblem, Solution, SolverConfig, solve  # noqa: E402
from .capacity import capacity, check_mecap, l_distribution, l_potential  # noqa: E402
from .potential import (  # noqa: E402
    ball_capacity_scaling,
    wiener_integral,
    wiener_profile,
    wolff_potential,
)
from .probe import BoundaryData, DomainFamily, probe_regularity  # noqa: E402

__all__ = [
    "CoefficientKernel", "Grid", "NodeSet", "PairWeightMatrix", "Params", "StandardKernel",
    "assemble_weights", "build_grid", "node_set",
    "ConstantFarField", "DiscreteFunction", "RadialPowerFarField", "ZeroFarField",
    "energy_form", "gagliardo_seminorm_p", "phi_average", "tail",
    "ConvergenceError", "DirichletProblem", "Solution", "SolverConfig", "solve",
    "capacity", "check_mecap", "l_distribution", "l_potential",
    "ball_capacity_scaling", "wiener_integral", "wiener_profile", "wolff_potential",
    "BoundaryData", "DomainFamily", "probe_regularity",
]
