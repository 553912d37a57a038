"""Numerical laboratory for Neumann problems in cusp-degenerate channels.

The package solves the strip-transformed channel problem with bilinear
finite elements, evaluates the closed-form energy asymptotics and
variational bounds, and integrates the rigid-body descent dynamics the
energy law induces.
"""

from .asymptotics import (
    AsymptoticModel,
    EnergyCurve,
    FitResult,
    LowerBoundReport,
    ansatz_energy,
    ansatz_energy_report,
    ansatz_residuals,
    ansatz_value,
    ell_leading,
    energy_leading,
    fit_model,
    lower_bound,
    sine_ratio,
)
from .collision import (
    REAL_SHOCK,
    SMOOTH_LANDING,
    UNRESOLVED,
    CollisionSetup,
    CollisionTrajectory,
    added_mass,
    classify,
    integrate_collision,
    velocity_rhs,
)
from .geometry import (
    CuspProfile,
    HeightJet,
    StripMap,
    SymmetricMatrix2,
    coefficient_matrix,
    eigen_bounds,
    forward_map,
    height_jet,
    inverse_map,
    neumann_data,
    strip_length,
)
from .mesh import Mesh, TransformedDomain, build_domain, build_mesh
from .solver import (
    CompatibilityError,
    FieldSolution,
    SolverError,
    StiffnessOperator,
    assemble_load,
    assemble_stiffness,
    dirichlet_energy,
    manufactured_case,
    solve_channel_problem,
    solve_zero_mean,
)

__version__ = "0.1.0"
