import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavity_herald.closed import (
    FIVE_STATES, closed_solution, closed_state, entangle_probability, overlap_probability,
    p_max, p_max_beta, peak_times, rabi_rate,
)
from cavity_herald.lindblad import IntegratorConfig, evolve_master
from cavity_herald.model import SystemParams, build_model, symmetric_ket
from cavity_herald.space import ONE_RIGHT, build_space, expm, ket

couplings = st.floats(0.05, 5.0)


def exact_state(params, t):
    """Oracle: own scaling-and-squaring exponential of -iHt on the full space."""
    m = build_model(params)
    psi0 = m.space.basis_vector(params.initial_state)
    return expm(-1j * t * m.hamiltonian.matrix) @ psi0


def test_pmax_values():
    assert p_max_beta(1.0) == pytest.approx(8 / 9, abs=1e-15)
    assert p_max_beta(math.sqrt(2)) == pytest.approx(1.0, abs=1e-15)
    assert p_max_beta(0.0) == 0.0
    with pytest.raises(ValueError):
        p_max_beta(-1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 100.0))
def test_pmax_bounded_and_peaks_at_root2(beta):
    assert 0.0 <= p_max_beta(beta) <= 1.0 + 1e-15
    assert p_max_beta(beta) <= p_max_beta(math.sqrt(2)) + 1e-15


def test_alpha_from_normalization():
    sol = closed_solution(SystemParams(1.3, 0.4))
    assert sol.alpha == pytest.approx(math.sqrt(2 * 1.3**2 + 0.4**2))
    assert sol.amplitudes(0.0)[0] == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(couplings, couplings, st.floats(0.0, 40.0))
def test_normalized(gl, gr, t):
    amps = closed_solution(SystemParams(gl, gr)).amplitudes(t)
    assert np.sum(np.abs(amps) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_matches_matrix_exponential_20_draws(rng):
    worst = 0.0
    for _ in range(20):
        gl, gr = rng.uniform(0.1, 5.0, size=2)
        p = SystemParams(gl, gr, 0.0)
        alpha = rabi_rate(p)
        for t in np.linspace(0.0, 10 * math.pi / alpha, 41):
            worst = max(worst, np.abs(closed_state(p, t) - exact_state(p, t)).max())
    assert worst < 1e-8


def test_excited_amplitude_sign():
    # short-time expansion: i dpsi/dt = H psi gives c_e ~ +g_L t
    p = SystemParams(1.0, 0.5, 0.0)
    sp = build_space(1)
    t = 1e-4
    ie = sp.index(ket("e", "L", "0"))
    assert closed_state(p, t)[ie].real == pytest.approx(t, rel=1e-6)
    assert exact_state(p, t)[ie].real == pytest.approx(t, rel=1e-6)


def test_probability_formula_consistent_with_overlap(rng):
    for _ in range(5):
        p = SystemParams(*rng.uniform(0.2, 3.0, size=2))
        for t in rng.uniform(0.0, 10.0, size=4):
            assert entangle_probability(p, t) == pytest.approx(overlap_probability(p, t), abs=1e-12)


def test_peak_times():
    p = SystemParams(1.0, math.sqrt(2))
    ts = peak_times(p, 3)
    assert np.allclose(entangle_probability(p, ts), 1.0)
    assert ts[0] == pytest.approx(math.pi / 2.0)


def test_support_is_five_states():
    p = SystemParams(0.8, 1.7, 0.0)
    psi = exact_state(p, 3.3)
    sp = build_space(1)
    idx = [sp.index(s) for s in FIVE_STATES]
    mask = np.ones(sp.dim, bool)
    mask[idx] = False
    assert np.abs(psi[mask]).max() < 1e-14


def test_numerical_kappa_zero_peak():
    p = SystemParams(1.0, 1.0, 0.0)
    t_peak = math.pi / rabi_rate(p)
    ev = evolve_master(p, IntegratorConfig(t_max=t_peak), times=[0.0, t_peak])
    phi = symmetric_ket(ev.space, ONE_RIGHT)
    assert abs(np.vdot(phi, ev.states[-1] @ phi).real - 8 / 9) < 1e-6


def test_rejects_uncoupled_and_other_initial_state():
    with pytest.raises(ValueError):
        closed_solution(SystemParams(0.0, 1.0))
    with pytest.raises(ValueError):
        p_max(SystemParams(0.0, 1.0))
    with pytest.raises(ValueError):
        closed_solution(SystemParams(1.0, 1.0, initial_state=ket("R", "L", "0")))


@settings(max_examples=30, deadline=None)
@given(couplings, couplings)
def test_returns_after_full_period(gl, gr):
    p = SystemParams(gl, gr)
    psi = closed_state(p, 2 * math.pi / rabi_rate(p))
    start = build_space(1).basis_vector(p.initial_state)
    assert abs(np.vdot(start, psi)) ** 2 == pytest.approx(1.0, abs=1e-12)
    assert entangle_probability(p, 0.0) == 0.0
