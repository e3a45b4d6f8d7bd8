"""Hamiltonian, collapse operators and target projector for the two-atom cavity.

All dynamics are in the interaction picture at exact resonance, so the free
atomic and field Hamiltonians drop out and only the coupling term remains::

    H = i * sum_{atom, lam} g_lam * (c_lam |e><lam| - c_lam^dag |lam><e|)

Cavity leakage enters through the collapse operators sqrt(kappa) * c_lam.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .space import (
    ONE_LEFT,
    VACUUM,
    AtomLevel,
    BasisState,
    HilbertSpace,
    Operator,
    PhotonConfig,
    Polarization,
    annihilation_op,
    atomic_transition_op,
    build_space,
    swap_operator,
)

INITIAL_STATE = BasisState(AtomLevel.L, AtomLevel.L, ONE_LEFT)


@dataclass(frozen=True)
class SystemParams:
    """Coupling rates and cavity decay; rates share one arbitrary unit."""

    g_L: float
    g_R: float
    kappa: float = 1.0
    fock_cutoff: int = 1
    initial_state: BasisState = INITIAL_STATE

    def __post_init__(self):
        for name in ("g_L", "g_R", "kappa"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a finite number >= 0, got {v!r}")
        if self.fock_cutoff < 1:
            raise ValueError("fock_cutoff must be >= 1")

    @property
    def beta(self) -> float:
        if self.g_L <= 0:
            raise ValueError("beta = g_R/g_L is undefined for g_L = 0")
        return self.g_R / self.g_L

    @property
    def max_rate(self) -> float:
        return max(self.g_L, self.g_R, self.kappa)

    def scaled(self, s: float) -> SystemParams:
        return SystemParams(s * self.g_L, s * self.g_R, s * self.kappa,
                            self.fock_cutoff, self.initial_state)


@dataclass(frozen=True, eq=False)
class ModelOperators:
    space: HilbertSpace
    params: SystemParams
    hamiltonian: Operator
    collapse_ops: tuple[Operator, Operator]
    effective_hamiltonian: Operator
    target_projector: Operator
    swap: Operator = field(repr=False)
    annihilators: tuple[Operator, Operator] = field(repr=False)


def build_hamiltonian(space: HilbertSpace, params: SystemParams) -> Operator:
    h = np.zeros((space.dim, space.dim), dtype=complex)
    for pol, g in ((Polarization.L, params.g_L), (Polarization.R, params.g_R)):
        if g == 0:
            continue
        c = annihilation_op(space, pol).matrix
        ground = AtomLevel.L if pol is Polarization.L else AtomLevel.R
        for atom in ("a", "b"):
            raise_ = atomic_transition_op(space, atom, ground, AtomLevel.E).matrix
            term = g * (c @ raise_)
            h += 1j * (term - term.conj().T)
    return Operator(h, hermitian=True)


def build_collapse_ops(space: HilbertSpace, params: SystemParams) -> tuple[Operator, Operator]:
    if params.kappa < 0:
        raise ValueError("kappa must be >= 0")
    rk = math.sqrt(params.kappa)
    return tuple(Operator(rk * annihilation_op(space, pol).matrix) for pol in Polarization)


def symmetric_ket(space: HilbertSpace, photons: PhotonConfig = VACUUM) -> np.ndarray:
    """(|R,L;n> + |L,R;n>)/sqrt(2) in the given photon sector."""
    rl = BasisState(AtomLevel.R, AtomLevel.L, photons)
    lr = BasisState(AtomLevel.L, AtomLevel.R, photons)
    return (space.basis_vector(rl) + space.basis_vector(lr)) / math.sqrt(2.0)


def target_projector(space: HilbertSpace, photon_sector: PhotonConfig = VACUUM) -> Operator:
    phi = symmetric_ket(space, photon_sector)
    return Operator(np.outer(phi, phi.conj()), hermitian=True)


def build_model(params: SystemParams, photon_sector: PhotonConfig = VACUUM) -> ModelOperators:
    return _build_model_cached(params, photon_sector)


@lru_cache(maxsize=64)
def _build_model_cached(params: SystemParams, photon_sector: PhotonConfig) -> ModelOperators:
    space = build_space(params.fock_cutoff)
    H = build_hamiltonian(space, params)
    cops = build_collapse_ops(space, params)
    decay = sum(c.matrix.conj().T @ c.matrix for c in cops)
    heff = Operator(H.matrix - 0.5j * decay)
    annihilators = tuple(annihilation_op(space, pol) for pol in Polarization)
    return ModelOperators(
        space=space,
        params=params,
        hamiltonian=H,
        collapse_ops=cops,
        effective_hamiltonian=heff,
        target_projector=target_projector(space, photon_sector),
        swap=swap_operator(space),
        annihilators=annihilators,
    )


def coupling_graph(model: ModelOperators, states) -> dict[BasisState, set[BasisState]]:
    """Nonzero Hamiltonian couplings among the given basis states."""
    space = model.space
    H = model.hamiltonian.matrix
    graph = {}
    for s in states:
        j = space.index(s)
        graph[s] = {t for t in states if t != s and H[space.index(t), j] != 0}
    return graph
