"""Quantum sawtooth map on a simulated qubit register, with hardware imperfections."""

__version__ = "0.1.0"

from .analysis import (
    FidelityTrace,
    HusimiGrid,
    fidelity,
    fidelity_time,
    fit_fidelity_decay,
    husimi,
    momentum_distribution,
    quantum_second_moment,
    scaling_exponent,
)
from .circuit import Circuit, Gate, build_map_circuit, build_qft, build_quadratic_phase
from .classical import EnsembleConfig, evolve_ensemble
from .config import RunConfig
from .hardware import ErrorMode, free_evolution_step, run_imperfect_evolution, sample_static
from .lattice import LatticeLayout, route
from .state import (
    ExactPropagator,
    QuantumRegister,
    SawtoothParams,
    exact_map_iteration,
    init_momentum_eigenstate,
)

__all__ = [
    "Circuit",
    "EnsembleConfig",
    "ErrorMode",
    "ExactPropagator",
    "FidelityTrace",
    "Gate",
    "HusimiGrid",
    "LatticeLayout",
    "QuantumRegister",
    "RunConfig",
    "SawtoothParams",
    "build_map_circuit",
    "build_qft",
    "build_quadratic_phase",
    "evolve_ensemble",
    "exact_map_iteration",
    "fidelity",
    "fidelity_time",
    "fit_fidelity_decay",
    "free_evolution_step",
    "husimi",
    "init_momentum_eigenstate",
    "momentum_distribution",
    "quantum_second_moment",
    "route",
    "run_imperfect_evolution",
    "sample_static",
    "scaling_exponent",
]
