"""Numerical solvers for ergodic mean field games on bounded grids."""

from .grid import (
    DiscreteGenerator,
    Discretization,
    Grid,
    MonotonicityError,
    apply_generator,
    assemble_policy_generator,
    build_generator,
)
from .measures import (
    GridMeasure,
    monotonicity_gap,
    moment,
    occupation_residual,
    project_truncate,
    total_variation,
    wasserstein,
)
from .model import (
    InteractionSpec,
    ModelSpec,
    asymptotic_flatness_check,
    builtin_model,
    hamiltonian_min,
    validate_model,
)
from .ergodic import (
    ErgodicOptions,
    ErgodicSolution,
    Policy,
    SolverError,
    ValueField,
    best_response,
    solve_ergodic_hjb,
    stationary_distribution,
)
from .mfg_stationary import MfgSolution, solve_mfg, verify_mfg_solution
from .horizon import (
    TrajectorySolution,
    backward_rvi,
    backward_vi,
    forward_kolmogorov,
    geometric_ergodicity_fit,
    rvi_transform,
    solve_finite_horizon_mfg,
    turnpike_report,
)
from .nplayer import (
    averaged_cost,
    nash_deviation_check,
    nplayer_convergence_report,
    simulate_particles,
    solve_symmetric_nplayer,
)

__version__ = "0.1.0"
