"""Regularized penalty-multiplier solver for cavitation under a volume constraint."""

from cavsolve.auglag import (
    AugLagConfig,
    ContinuationStep,
    IterationRecord,
    OuterResult,
    replay_table,
    run_continuation,
    run_outer,
    update_multiplier,
    update_penalty,
)
from cavsolve.errors import (
    CavsolveError,
    ConfigError,
    DeterminantCollapseError,
    FlowStalledError,
    LinearSolveError,
    ReplayError,
)
from cavsolve.fem import (
    BoundaryData,
    CavitationProblem,
    DeformationField,
    affine_field,
    assemble_residual,
    assemble_stiffness,
    constraint_eps,
    energy_eps,
    penalty_energy,
    solve_spd,
)
from cavsolve.flow import FlowConfig, FlowResult, flow_step, run_flow
from cavsolve.material import MaterialModel, adj2, cof2, det2, stress_free_c2
from cavsolve.mesh import Mesh, MeshParams, build_annulus, interpolate
from cavsolve.oracles import (
    FluidExactSolution,
    cavity_volume,
    fluid_exact_energy,
    fluid_exact_eval,
    fluid_exact_multiplier,
    initializer_z_eps,
    inner_bc_residual,
    sensitivity,
)
from cavsolve.runconfig import RunConfig, load_run_config

__version__ = "0.1.0"

__all__ = [
    "AugLagConfig",
    "BoundaryData",
    "CavitationProblem",
    "CavsolveError",
    "ConfigError",
    "ContinuationStep",
    "DeformationField",
    "DeterminantCollapseError",
    "FlowConfig",
    "FlowResult",
    "FlowStalledError",
    "FluidExactSolution",
    "IterationRecord",
    "LinearSolveError",
    "MaterialModel",
    "Mesh",
    "MeshParams",
    "OuterResult",
    "ReplayError",
    "RunConfig",
    "adj2",
    "affine_field",
    "assemble_residual",
    "assemble_stiffness",
    "build_annulus",
    "cavity_volume",
    "cof2",
    "constraint_eps",
    "det2",
    "energy_eps",
    "flow_step",
    "fluid_exact_energy",
    "fluid_exact_eval",
    "fluid_exact_multiplier",
    "initializer_z_eps",
    "inner_bc_residual",
    "interpolate",
    "load_run_config",
    "penalty_energy",
    "replay_table",
    "run_continuation",
    "run_flow",
    "run_outer",
    "sensitivity",
    "solve_spd",
    "stress_free_c2",
    "update_multiplier",
    "update_penalty",
]
