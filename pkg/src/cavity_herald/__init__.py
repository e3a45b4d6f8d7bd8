"""Heralded entanglement of two Lambda atoms in a two-mode cavity."""

__version__ = "0.1.0"

from .closed import closed_solution, entangle_probability, p_max, p_max_beta
from .lindblad import IntegrationError, IntegratorConfig, evolve_master, steady_state_p
from .model import INITIAL_STATE, SystemParams, build_model
from .space import AtomLevel, BasisState, HilbertSpace, Polarization, build_space
from .trajectories import Outcome, ProtocolConfig, run_ensemble, run_trajectory

__all__ = [
    "AtomLevel", "BasisState", "HilbertSpace", "INITIAL_STATE", "IntegrationError",
    "IntegratorConfig", "Outcome", "Polarization", "ProtocolConfig", "SystemParams",
    "build_model", "build_space", "closed_solution", "entangle_probability",
    "evolve_master", "p_max", "p_max_beta", "run_ensemble", "run_trajectory",
    "steady_state_p",
]
