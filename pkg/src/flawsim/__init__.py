"""Simulation of a two-qubit CNOT gate embedded in a register of imperfect idle qubits."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigError,
    DimensionError,
    DomainError,
    FlawSimError,
    IntegrationError,
    StiffnessError,
)
from .pauli import OperatorSum, PauliTerm, SparseOperator, apply_sum, apply_term, expectation, to_dense
from .model import (
    BathParams,
    ControlSchedule,
    CouplingType,
    Realization,
    ScheduleSegment,
    bath_coupling_operator,
    build_bath_hamiltonian,
    build_cnot_schedule,
    build_interaction,
    ideal_cnot,
    sample_realization,
    static_hamiltonian,
    to_seconds,
)
from .spectral import (
    LevelStats,
    SpectralDecomposition,
    ThermalEnsemble,
    canonical_average,
    diagonalize,
    r_statistic,
    thermal_ensemble,
)
from .propagate import PropagationProblem, Trajectory, evolve, sample_grid
from .observables import (
    InitialStateSet,
    MetricsSeries,
    average_over_set,
    check_density,
    fidelity,
    partial_trace_bath,
    purity,
)
from .experiment import (
    RunConfig,
    run_gate_experiment,
    run_shift_scan,
    run_spectrum_scan,
    validate_gate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
