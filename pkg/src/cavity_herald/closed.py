"""Exact lossless-cavity dynamics of the five-state single-photon problem.

Starting from |L,L;L>, the coupling Hamiltonian only reaches
{|L,L;L>, |e,L;0>, |L,e;0>, |R,L;R>, |L,R;R>}.  The amplitudes oscillate at
the effective Rabi rate

    alpha = sqrt(2 g_L**2 + g_R**2),

which is fixed by normalization at t = 0: the |L,L;L> amplitude
(g_R**2 + 2 g_L**2 cos(alpha t)) / alpha**2 must equal 1 there.

The excited-state amplitude is +(g_L/alpha) sin(alpha t).  This is the sign
produced by i d|psi>/dt = H|psi> with H = i sum g (c|e><lam| - h.c.); the
probabilities do not depend on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import INITIAL_STATE, SystemParams, symmetric_ket
from .space import ONE_RIGHT, HilbertSpace, build_space, ket

FIVE_STATES = (
    ket("L", "L", "L"),
    ket("e", "L", "0"),
    ket("L", "e", "0"),
    ket("R", "L", "R"),
    ket("L", "R", "R"),
)


def _check(params: SystemParams):
    if params.g_L <= 0:
        raise ValueError("closed-cavity solution needs g_L > 0 (the photon is never absorbed otherwise)")
    if params.initial_state != INITIAL_STATE:
        raise ValueError("closed-cavity solution assumes the initial state |L,L;L>")


def rabi_rate(params: SystemParams) -> float:
    return math.sqrt(2.0 * params.g_L**2 + params.g_R**2)


@dataclass(frozen=True)
class ClosedSolution:
    g_L: float
    g_R: float
    alpha: float

    def amplitudes(self, t) -> np.ndarray:
        """Five amplitudes over FIVE_STATES; ``t`` may be an array (last axis indexes states)."""
        t = np.asarray(t, dtype=float)
        a2 = self.alpha**2
        x = self.alpha * t
        c0 = (self.g_R**2 + 2.0 * self.g_L**2 * np.cos(x)) / a2
        ce = (self.g_L / self.alpha) * np.sin(x)
        cr = -(2.0 * self.g_L * self.g_R / a2) * np.sin(0.5 * x) ** 2
        return np.stack([c0, ce, ce, cr, cr], axis=-1).astype(complex)


def closed_solution(params: SystemParams) -> ClosedSolution:
    _check(params)
    return ClosedSolution(params.g_L, params.g_R, rabi_rate(params))


def closed_state(params: SystemParams, t: float, space: HilbertSpace | None = None) -> np.ndarray:
    """Full-space state vector at time ``t`` (kappa is ignored)."""
    sol = closed_solution(params)
    space = space or build_space(params.fock_cutoff)
    psi = np.zeros(space.dim, dtype=complex)
    for s, amp in zip(FIVE_STATES, sol.amplitudes(t)):
        psi[space.index(s)] = amp
    return psi


def entangle_probability(params: SystemParams, t):
    """P(t) = 8 beta^2/(beta^2+2)^2 sin^4(alpha t / 2)."""
    _check(params)
    beta = params.beta
    alpha = rabi_rate(params)
    return 8.0 * beta**2 / (beta**2 + 2.0) ** 2 * np.sin(0.5 * alpha * np.asarray(t)) ** 4


def p_max(params: SystemParams) -> float:
    _check(params)
    beta = params.beta
    return 8.0 * beta**2 / (beta**2 + 2.0) ** 2


def p_max_beta(beta: float) -> float:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return 8.0 * beta**2 / (beta**2 + 2.0) ** 2


def peak_times(params: SystemParams, n: int) -> np.ndarray:
    """First ``n`` times (2k+1) pi / alpha at which P(t) peaks."""
    return (2 * np.arange(n) + 1) * math.pi / rabi_rate(params)


def overlap_probability(params: SystemParams, t: float) -> float:
    """|<phi|Psi(t)>|^2 from the amplitudes, phi the one-right-photon entangled ket."""
    space = build_space(params.fock_cutoff)
    phi = symmetric_ket(space, ONE_RIGHT)
    return float(abs(np.vdot(phi, closed_state(params, t, space))) ** 2)
