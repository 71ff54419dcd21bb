"""Open two-mode atom interferometer: Lindblad dynamics, phase sensitivity and insensitivity points."""

__version__ = "0.1.0"

from .analysis import (
    CrossoverTable,
    InsensitivityReport,
    InvarianceVerdict,
    ScalingResult,
    check_gamma_invariance,
    check_operator_invariance,
    count_density_vs_N,
    crossover_experiment,
    find_insensitivity_points,
    first_minimum,
)
from .dynamics import (
    Diagnostics,
    IntegratorConfig,
    LindbladGenerator,
    Propagator,
    apply_propagator,
    evolve_rk4,
    lindblad_rhs,
    unitary_propagator,
)
from .errors import (
    DimensionMismatch,
    IntegrationFailure,
    IntegrityError,
    InvalidArgument,
    LindeyError,
    ResolutionFailure,
    UnsupportedCase,
    UnsupportedOperator,
)
from .estimation import (
    Estimator,
    SensitivityCurve,
    SensitivityPoint,
    moments,
    qfi_of,
    sensitivity,
    sweep_sensitivity,
)
from .fock import BasisKind, BasisSpec, InputState, OperatorSet, build_basis, build_input_state, build_operators
from .oracles import (
    AnalyticCase,
    Quantity,
    analytic_insensitivity_times,
    analytic_sensitivity,
    analytic_state,
)
from .protocol import (
    Interferometer,
    NoiseOp,
    NoisePlacement,
    ProtocolConfig,
    ProtocolRun,
    default_config_for,
    run_protocol,
)

__all__ = [name for name in dir() if not name.startswith("_")]
