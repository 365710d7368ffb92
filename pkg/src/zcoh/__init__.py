"""Zero-order coherence transfer along spin-1/2 chains.

Excitation-conserving dynamics in sector blocks, perfectly transferable
0-order coherence matrices (complete and restricted protocols), extended
receiver unitary optimization, scale-factor analysis for arbitrary-state
transfer, and a full-space oracle for small chains.
"""

from .basis import ExcitationBasis, sector_basis, sector_dim, subsystem_embedding
from .chain import (
    DEFAULT_COUPLING_MODE,
    ChainSpec,
    CouplingMode,
    coupling_matrix,
    hamiltonian_block,
)
from .config import ConfigError, ExperimentConfig, resolve_config, validate_config
from .dynamics import (
    SpectralCache,
    apply_extended_unitary,
    combined_block,
    evolve_block,
    propagator_block,
    two_excitation_transfer_amplitude,
)
from .optimize import (
    DEConfig,
    DEResult,
    NoConvergenceError,
    ObjectiveSpec,
    ResidualForm,
    cross_validate_global,
    differential_evolution,
    exact_root_refine,
    local_polish,
    residual_S_T,
)
from .solvers import (
    ArbitraryTransferResult,
    CouplingCalibration,
    DegenerateTimeError,
    FlatCriterionError,
    InfeasibleConfigurationError,
    InfeasibleStateError,
    PTZSolution,
    RegistrationCriterion,
    RegistrationTime,
    RestrictedAngleResult,
    calibrate_coupling_mode,
    default_window,
    find_registration_time,
    offdiagonal_floor,
    optimize_restricted_angles,
    solve_arbitrary_parameter,
    solve_ptz_complete,
    solve_ptz_restricted,
    transfer_receiver_state,
)
from .states import (
    AsymptoticPTZ,
    AsymptoticVariant,
    ZeroCoherenceState,
    apply_exchange_unitary,
    block_distance,
    deviation,
    embed_initial_state,
    partial_trace_to_receiver,
    random_state,
)
from .transfer import (
    OneExcitationMap,
    ScaleFactors,
    SizeBoundCheck,
    TransferProtocol,
    TransferTensor,
    check_size_bounds,
    fixed_time_restriction,
    one_excitation_map,
    scale_factors,
    transfer_tensor,
)
from .unitary import ReceiverUnitaryParams, build_unitary_block, effective_parameter_count

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # basis
    "ExcitationBasis",
    "sector_basis",
    "sector_dim",
    "subsystem_embedding",
    # chain
    "ChainSpec",
    "CouplingMode",
    "DEFAULT_COUPLING_MODE",
    "coupling_matrix",
    "hamiltonian_block",
    # dynamics
    "SpectralCache",
    "propagator_block",
    "combined_block",
    "evolve_block",
    "apply_extended_unitary",
    "two_excitation_transfer_amplitude",
    # states
    "ZeroCoherenceState",
    "AsymptoticPTZ",
    "AsymptoticVariant",
    "apply_exchange_unitary",
    "block_distance",
    "deviation",
    "embed_initial_state",
    "partial_trace_to_receiver",
    "random_state",
    # unitary
    "ReceiverUnitaryParams",
    "build_unitary_block",
    "effective_parameter_count",
    # transfer
    "OneExcitationMap",
    "TransferTensor",
    "ScaleFactors",
    "SizeBoundCheck",
    "TransferProtocol",
    "check_size_bounds",
    "fixed_time_restriction",
    "one_excitation_map",
    "scale_factors",
    "transfer_tensor",
    # optimize
    "DEConfig",
    "DEResult",
    "ObjectiveSpec",
    "ResidualForm",
    "NoConvergenceError",
    "differential_evolution",
    "local_polish",
    "exact_root_refine",
    "cross_validate_global",
    "residual_S_T",
    # solvers
    "RegistrationCriterion",
    "RegistrationTime",
    "PTZSolution",
    "RestrictedAngleResult",
    "ArbitraryTransferResult",
    "CouplingCalibration",
    "FlatCriterionError",
    "DegenerateTimeError",
    "InfeasibleStateError",
    "InfeasibleConfigurationError",
    "calibrate_coupling_mode",
    "default_window",
    "find_registration_time",
    "transfer_receiver_state",
    "solve_ptz_complete",
    "solve_ptz_restricted",
    "optimize_restricted_angles",
    "solve_arbitrary_parameter",
    "offdiagonal_floor",
    # config
    "ExperimentConfig",
    "ConfigError",
    "resolve_config",
    "validate_config",
]
