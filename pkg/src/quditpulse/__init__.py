"""Waveform design and evaluation for qudit control on hyperfine manifolds.

Synthesizes piecewise-constant rf/microwave phase waveforms implementing
target unitary maps on the 16-dimensional cesium ground manifold via
gradient ascent with exact finite-step gradients, hardens them against
bias-field perturbations through ensemble-averaged objectives, and
validates them with simulated randomized benchmarking and fidelity
landscape sweeps.
"""

from .benchmarking import (
    BenchmarkConfig,
    BenchmarkResult,
    BenchmarkSequence,
    DecayFit,
    ErrorModel,
    MapImplementation,
    build_sequences,
    decay_model,
    fit_decay,
    run_benchmark,
    simulate_sequence,
)
from .errors import (
    DesignError,
    FileFormatError,
    FitError,
    NumericalError,
    SequenceConstructionError,
    UnderparameterizedError,
)
from .grape import (
    DesignConfig,
    OptimizationReport,
    SeedRecord,
    ascend,
    design,
    random_initial_waveform,
    required_phase_count,
)
from .objectives import (
    DEFAULT_FIELD_RADIUS,
    ObjectiveValue,
    PerturbationEnsemble,
    TargetMap,
    ensemble_fidelity,
    fidelity,
    fidelity_full,
    fidelity_subspace,
    hilbert_schmidt_distance,
    objective_with_gradient,
)
from .propagation import (
    ControlWaveform,
    FieldTrajectory,
    PropagationRecord,
    propagate,
    step_propagator,
    step_propagator_with_derivatives,
    total_unitary,
    unitarity_defect,
)
from .spin_model import (
    ManifoldStructure,
    PhysicalParams,
    StepPhases,
    angular_momentum_ops,
    build_step_hamiltonian,
    cesium,
    hermiticity_defect,
    perturbation_generator,
)
from .sweeps import (
    FieldGridSpec,
    GridResult,
    TimeGridSpec,
    contour_area,
    sweep_field_grid,
    sweep_time_grid,
    symmetric_field_grid,
)
from .targets import (
    RngStream,
    sample_haar_unitary,
    sample_random_state,
    sample_subspace_target,
    sample_target,
)

__version__ = "0.1.0"
