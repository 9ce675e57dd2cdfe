"""Pulse synthesis for simulated transmon gates via regularized shooting."""

from .exceptions import (
    BlockStructureViolation,
    ConfigError,
    DimensionMismatch,
    FactorizationFailure,
    NonFiniteCost,
    NonUnitaryInput,
    PulseOptError,
    SingularDenominator,
    UnitarityDrift,
)
from .iso import (
    IsoMatrix,
    IsoVector,
    apply_propagator_to_state,
    devectorize_unitary,
    embed_matrix,
    embed_vector,
    extract_matrix,
    extract_vector,
    vectorize_unitary,
)
from .propagator import (
    DIAGONAL_DEGREE_4,
    AffineGenerator,
    PadeCoefficients,
    PropagatorWithDerivatives,
    pade_expm,
    step_propagator,
    step_propagators,
)
from .transmon import (
    GoalGate,
    TransmonSystem,
    control_hamiltonians,
    drift_hamiltonian,
    goal_gate,
    iso_generator,
    make_system,
)
from .dynamics import Dynamics, StageJacobians, Trajectory
from .ocp import (
    CostDerivatives,
    CostMatrices,
    FidelityReport,
    GateSynthesisProblem,
    fidelity,
    final_cost,
    stage_cost,
)
from .solver import (
    BackwardPassResult,
    SolveReport,
    SolverSettings,
    StageDerivatives,
    backward_pass,
    forward_pass,
    solve,
)
from .config import GridSpec, RunConfig, load_config, parse_config
from .harness import (
    derivative_correlation,
    drag_check_run,
    gridsearch_run,
    optimize_run,
    rollout_run,
    run_rng,
)

__version__ = "0.1.0"
