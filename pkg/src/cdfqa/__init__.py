"""Classical simulation of feedback-based quantum algorithms (FQA and CD-FQA) on Ising chains."""

from .engine import EvolutionOp, Spectrum, StateVector, diagonalize, energy_bins, initial_state
from .measure import estimate_operator, parallel_count, plan_measurements, run_protocol_sampled, sample_expectation
from .model import OperatorTag, SpinChainSpec, build_ising, build_operator
from .noisy import NoiseSpec, fold_and_extrapolate, run_noisy, run_zne
from .pauli import PauliString, PauliSum, commutator, commutes, nested_commutator_pool
from .protocol import LayerRecord, ProtocolError, ProtocolSpec, run_protocol, run_with_additional_term, trajectory

__version__ = "0.1.0"

__all__ = [
    "EvolutionOp",
    "LayerRecord",
    "NoiseSpec",
    "OperatorTag",
    "PauliString",
    "PauliSum",
    "ProtocolError",
    "ProtocolSpec",
    "Spectrum",
    "SpinChainSpec",
    "StateVector",
    "build_ising",
    "build_operator",
    "commutator",
    "commutes",
    "diagonalize",
    "energy_bins",
    "estimate_operator",
    "fold_and_extrapolate",
    "initial_state",
    "nested_commutator_pool",
    "parallel_count",
    "plan_measurements",
    "run_noisy",
    "run_protocol",
    "run_protocol_sampled",
    "run_with_additional_term",
    "trajectory",
    "run_zne",
    "sample_expectation",
]
