"""Mixed finite element solver for nematic liquid crystal elastomers.

Reproduces the clamped-pulling experiment: trace-form elastomer energy
coupled to director elasticity, with incompressibility and unit-director
constraints enforced by Lagrange multipliers on Taylor-Hood / P1-P1
elements, plus saddle-point well-posedness diagnostics and an analytic
verification core.
"""

from .btw_core import (
    MaterialParams,
    btw_energy,
    min_over_director,
    nonconvexity_witness,
    piola_stress,
    shear_family,
    stress_free_state,
    verify_propositions,
)
from .mesh import Mesh, MeshParams, build_uniform_mesh, refine
from .spaces import (
    DofMap,
    FieldState,
    ProblemSpaces,
    build_problem_spaces,
    build_space,
    evaluate,
    field_norm,
    nodal_interpolate,
    transfer_to_refined,
)
from .assembly import (
    SaddleMatrices,
    assemble_constraint_blocks,
    assemble_energy,
    assemble_gram,
    assemble_jacobian,
    assemble_residual,
    build_saddle_matrices,
)
from .solver import (
    ContinuationFailedError,
    MaxIterationsError,
    SingularFactorizationError,
    SolverConfig,
    SolverError,
    Trajectory,
    apply_boundary_conditions,
    continuation_run,
    initial_state,
    newton_solve,
    nominal_stress,
    set_dirichlet,
)
from .diagnostics import (
    ErrorRow,
    InfSupReport,
    convergence_rates,
    error_table,
    infsup_report,
    infsup_value,
    kernel_restricted,
)

__version__ = "0.1.0"

__all__ = [
    "MaterialParams",
    "btw_energy",
    "min_over_director",
    "nonconvexity_witness",
    "piola_stress",
    "shear_family",
    "stress_free_state",
    "verify_propositions",
    "Mesh",
    "MeshParams",
    "build_uniform_mesh",
    "refine",
    "DofMap",
    "FieldState",
    "ProblemSpaces",
    "build_problem_spaces",
    "build_space",
    "evaluate",
    "field_norm",
    "nodal_interpolate",
    "transfer_to_refined",
    "SaddleMatrices",
    "assemble_constraint_blocks",
    "assemble_energy",
    "assemble_gram",
    "assemble_jacobian",
    "assemble_residual",
    "build_saddle_matrices",
    "ContinuationFailedError",
    "MaxIterationsError",
    "SingularFactorizationError",
    "SolverConfig",
    "SolverError",
    "Trajectory",
    "apply_boundary_conditions",
    "continuation_run",
    "initial_state",
    "newton_solve",
    "nominal_stress",
    "set_dirichlet",
    "ErrorRow",
    "InfSupReport",
    "convergence_rates",
    "error_table",
    "infsup_report",
    "infsup_value",
    "kernel_restricted",
]
