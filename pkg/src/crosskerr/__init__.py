"""Hybrid atom-cavity registers with dispersive cross-Kerr couplings."""

from .dynamics import (
    DispersivePhase,
    DispersiveValidityWarning,
    JCParams,
    conditional_phase,
    dispersive_propagator,
    dispersive_validity,
    exact_jc_propagator,
    ising_gate,
)
from .entanglement import (
    CoherentQubitBasis,
    EbitQuery,
    coherent_qubit_basis,
    entanglement_entropy,
    one_ebit_condition,
    von_neumann_entropy,
)
from .hilbert import (
    DensityOperator,
    HybridState,
    RegisterLayout,
    TruncationError,
    coherent_overlap,
    coherent_state,
    default_nmax,
    displacement,
    partial_trace,
    qubit_state,
    tensor,
)
from .measurement import (
    GaussianPovm,
    PreconditionError,
    gaussian_cv_measurement,
    homodyne_phase_discriminator,
    ideal_phase_projection,
    measure_atoms,
    project_atom,
)
from .protocols import (
    BranchRecord,
    ProtocolReport,
    dispersive_gate_check,
    entanglement_swap,
    entanglement_transfer,
    multipair_reciprocation,
    multipair_transfer,
    reciprocation,
    round_trip,
    transfer_qubit_to_cv,
    transfer_qubit_to_qubit,
)

__version__ = "0.1.0"
