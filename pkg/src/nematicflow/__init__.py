"""Energy-dissipative solver for simplified Ericksen-Leslie nematic
liquid crystal flow on a 2D rectangle, with the diagnostics needed to
check its structural properties (incompressibility, unit-director drift,
energy dissipation, spectral gaps, convergence rates)."""

from .mesh import (
    BC_NEUMANN,
    BC_NO_SLIP,
    FaceField,
    Grid,
    GridSpec,
    State,
    director_field,
    face_field,
    fill_ghosts,
    make_grid,
    scalar_field,
    zero_state,
)
from .flow import (
    CflWarning,
    PhysicalParams,
    PoissonSolveReport,
    SolverConvergenceError,
    helmholtz_project,
    momentum_step,
)
from .director import (
    ConstraintPolicy,
    DirectorDegenerateError,
    constraint_drift,
    director_step,
    nlevp_residual,
)
from .diagnostics import CSV_HEADER, EnergyReport, energy, energy_identity_residual
from .analysis import (
    LinearOperator,
    RateFit,
    SpectralReport,
    assemble_linearization,
    distance_to_equilibria,
    fit_decay_rate,
    spectrum,
    steady_director_flow,
)
from .harness import (
    RefinementTable,
    RunSummary,
    ScenarioConfig,
    checkpoint_read,
    checkpoint_write,
    config_hash,
    load_config,
    parse_config,
    refinement_study,
    run_scenario,
)

__all__ = [
    "BC_NEUMANN",
    "BC_NO_SLIP",
    "CSV_HEADER",
    "CflWarning",
    "ConstraintPolicy",
    "DirectorDegenerateError",
    "EnergyReport",
    "FaceField",
    "Grid",
    "GridSpec",
    "LinearOperator",
    "PhysicalParams",
    "PoissonSolveReport",
    "RateFit",
    "RefinementTable",
    "RunSummary",
    "ScenarioConfig",
    "SolverConvergenceError",
    "SpectralReport",
    "State",
    "assemble_linearization",
    "checkpoint_read",
    "checkpoint_write",
    "config_hash",
    "constraint_drift",
    "distance_to_equilibria",
    "fit_decay_rate",
    "load_config",
    "parse_config",
    "refinement_study",
    "run_scenario",
    "spectrum",
    "steady_director_flow",
    "director_field",
    "director_step",
    "energy",
    "energy_identity_residual",
    "face_field",
    "fill_ghosts",
    "helmholtz_project",
    "make_grid",
    "momentum_step",
    "nlevp_residual",
    "scalar_field",
    "zero_state",
]
