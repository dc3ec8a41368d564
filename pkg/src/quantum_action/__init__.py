"""Quantum-action fits to Euclidean transition amplitudes of 1-D polynomial potentials."""

from .errors import (
    ConvergenceError,
    InputError,
    LeakageError,
    NonConvergence,
    NotDoubleWell,
    OptimizerFailure,
    OutOfGrid,
    ParityViolation,
    QuantumActionError,
    StepError,
    TruncationError,
)
from .model import (
    ActionParams,
    DoubleWellForm,
    PolynomialPotential,
    double_well_potential,
    eval_potential,
    eval_potential_derivative,
    from_double_well,
    harmonic_potential,
    to_double_well,
)
from .propagator import (
    SpatialGrid,
    Spectrum,
    harmonic_oracle,
    log_propagator_spectral,
    log_propagator_transfer,
    propagator_dense,
    propagator_spectral,
    propagator_transfer,
    solve_spectrum,
)
from .classical import (
    TrajectoryE,
    euclidean_action,
    instanton_action,
    instanton_action_closed_form,
    instanton_trajectory,
    solve_euclidean_bvp,
    verify_eom,
)
from .fit import (
    BoundarySet,
    FitConfig,
    FitResult,
    boundary_pairs,
    fit_objective,
    fit_quantum_action,
    stability_scan,
    temperature_sweep,
)
from .analysis import (
    AnharmonicModel,
    ThermalConfig,
    effective_vs_quantum_sweep,
    one_loop_coefficients,
    partition_function,
    thermal_expectation_exact,
    thermal_expectation_quantum_action,
)

__version__ = "0.1.0"
