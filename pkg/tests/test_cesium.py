import csv
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavity_herald.cesium import (
    QUOTED_COUPLINGS, clebsch_gordan, clebsch_gordan_squared, cg_table, dipole_cg,
    effective_couplings, reachable_levels, write_cg_csv,
)
from cavity_herald.space import Polarization


def _jz_jpm(j):
    ms = np.arange(j, -j - 1, -1)
    jp = np.zeros((ms.size, ms.size))
    for i in range(1, ms.size):
        m = ms[i]
        jp[i - 1, i] = math.sqrt(j * (j + 1) - m * (m + 1))
    return np.diag(ms), jp, ms


def cg_oracle(j1, j2):
    """|<j1 m1; j2 m2|J M>|^2 by diagonalizing J^2 on the product space."""
    z1, p1, ms1 = _jz_jpm(j1)
    z2, p2, ms2 = _jz_jpm(j2)
    e1, e2 = np.eye(ms1.size), np.eye(ms2.size)
    jz = np.kron(z1, e2) + np.kron(e1, z2)
    jp = np.kron(p1, e2) + np.kron(e1, p2)
    j2op = jp.T @ jp + jz @ jz + jz
    vals, vecs = np.linalg.eigh(j2op + 1e-3 * jz)  # split M within each J
    out = {}
    for k in range(vals.size):
        v = vecs[:, k]
        M = float(v @ jz @ v)
        Jv = float(v @ j2op @ v)
        J = (-1 + math.sqrt(1 + 4 * Jv)) / 2
        for a, m1 in enumerate(ms1):
            for b, m2 in enumerate(ms2):
                out[(m1, m2, round(2 * J) / 2, round(2 * M) / 2)] = v[a * ms2.size + b] ** 2
    return out


@pytest.mark.parametrize("j1,j2", [(3, 1), (0.5, 0.5), (1.5, 1), (2, 2), (4, 1)])
def test_racah_matches_angular_momentum_oracle(j1, j2):
    ref = cg_oracle(j1, j2)
    for (m1, m2, J, M), val in ref.items():
        got = clebsch_gordan(j1, m1, j2, m2, J, M) ** 2
        assert got == pytest.approx(val, abs=1e-9), (j1, m1, j2, m2, J, M)


def test_signs_against_sympy():
    from sympy import S
    from sympy.physics.quantum.cg import CG
    for j1, j2 in [(3, 1), (1.5, 0.5), (2, 1)]:
        for J in np.arange(abs(j1 - j2), j1 + j2 + 0.5):
            for m1 in np.arange(-j1, j1 + 0.5):
                for m2 in np.arange(-j2, j2 + 0.5):
                    M = m1 + m2
                    if abs(M) > J:
                        continue
                    ref = float(CG(S(j1), S(m1), S(j2), S(m2), S(J), S(M)).doit())
                    assert clebsch_gordan(j1, m1, j2, m2, J, M) == pytest.approx(ref, abs=1e-12)


def test_exact_values():
    # <F m; 1 -1|F m-1>^2 = (F+m)(F-m+1) / (2F(F+1))
    assert clebsch_gordan_squared(3, 1, 1, -1, 3, 0)[1] == Fraction(1, 2)
    assert clebsch_gordan_squared(3, 0, 1, -1, 3, -1)[1] == Fraction(1, 2)
    assert clebsch_gordan_squared(3, 3, 1, -1, 3, 2)[1] == Fraction(1, 4)
    assert clebsch_gordan_squared(3, -2, 1, 1, 3, -1)[1] == Fraction(5, 12)
    assert clebsch_gordan_squared(0.5, 0.5, 0.5, -0.5, 0, 0) == (1, Fraction(1, 2))
    assert clebsch_gordan(0.5, -0.5, 0.5, 0.5, 0, 0) == pytest.approx(-math.sqrt(0.5))


def test_selection_rules_and_errors():
    assert clebsch_gordan(3, 1, 1, 1, 3, 1) == 0.0   # M mismatch
    assert clebsch_gordan(3, 1, 1, 0, 5, 1) == 0.0   # triangle
    assert clebsch_gordan(3, 0, 1, 0, 3, 0) == 0.0   # accidental zero
    with pytest.raises(ValueError):
        clebsch_gordan(3, 4, 1, 0, 3, 4)
    with pytest.raises(ValueError):
        clebsch_gordan(3, 0.5, 1, 0, 3, 0.5)
    with pytest.raises(ValueError):
        clebsch_gordan(0.3, 0.3, 1, 0, 1, 0)


@pytest.mark.parametrize("j1,j2", [(3, 1), (1, 1), (1.5, 2)])
def test_orthonormality(j1, j2):
    Js = np.arange(abs(j1 - j2), j1 + j2 + 0.5)
    for M in np.arange(-(j1 + j2), j1 + j2 + 0.5):
        pairs = [(m1, M - m1) for m1 in np.arange(-j1, j1 + 0.5) if abs(M - m1) <= j2]
        rows = [J for J in Js if abs(M) <= J]
        C = np.array([[clebsch_gordan(j1, m1, j2, m2, J, M) for m1, m2 in pairs] for J in rows])
        assert np.allclose(C @ C.T, np.eye(len(rows)), atol=1e-12)
        assert np.allclose(C.T @ C, np.eye(len(pairs)), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 6), st.integers(0, 3), st.data())
def test_exchange_symmetry(tj1, tj2, data):
    j1, j2 = tj1 / 2, tj2 / 2
    J = data.draw(st.sampled_from(list(np.arange(abs(j1 - j2), j1 + j2 + 0.5))))
    m1 = data.draw(st.sampled_from(list(np.arange(-j1, j1 + 0.5))))
    m2 = data.draw(st.sampled_from(list(np.arange(-j2, j2 + 0.5))))
    if abs(m1 + m2) > J:
        return
    a = clebsch_gordan(j1, m1, j2, m2, J, m1 + m2)
    b = clebsch_gordan(j2, m2, j1, m1, J, m1 + m2)
    c = clebsch_gordan(j1, -m1, j2, -m2, J, -m1 - m2)
    phase = (-1) ** round(j1 + j2 - J)
    assert b == pytest.approx(phase * a, abs=1e-12)
    assert c == pytest.approx(phase * a, abs=1e-12)


def test_dipole_convention():
    # left light lowers m by one, right light raises it
    assert dipole_cg(1, Polarization.L) ** 2 == pytest.approx(Fraction(1, 2))
    assert dipole_cg(3, Polarization.R) == 0.0
    assert dipole_cg(-3, Polarization.L) == 0.0


def test_effective_couplings_g1():
    c = effective_couplings(3.0, 1)
    assert c.g_L == pytest.approx(3.0 / math.sqrt(2))
    assert c.g_R == pytest.approx(3.0 / math.sqrt(2))
    assert (c.ground_left.m_F, c.excited.m_F, c.ground_right.m_F) == (1, 0, -1)
    assert c.beta == pytest.approx(1.0)
    assert (c.g_L / 3.0, c.g_R / 3.0) == pytest.approx(QUOTED_COUPLINGS[1])


def test_effective_couplings_g0():
    c = effective_couplings(1.0, 0)
    assert c.g_L == pytest.approx(math.sqrt(0.5))
    assert c.g_R == pytest.approx(math.sqrt(5 / 12))
    assert (c.excited.m_F, c.ground_right.m_F) == (-1, -2)
    # the quoted legs are the same two numbers, listed the other way round
    assert sorted((c.g_L, c.g_R)) == pytest.approx(sorted(QUOTED_COUPLINGS[0]))


@pytest.mark.parametrize("m", [-2, -3, 4])
def test_no_lambda_system(m):
    with pytest.raises(ValueError):
        effective_couplings(1.0, m)
    with pytest.raises(ValueError):
        effective_couplings(-1.0, 1)


def test_reachable_levels_close_the_lambda():
    assert reachable_levels(0) == {("g_0", "L"), ("e_-1", "0"), ("g_-2", "R")}
    assert reachable_levels(1) == {("g_1", "L"), ("e_0", "0"), ("g_-1", "R")}


def test_cg_table_csv(tmp_path):
    rows = cg_table()
    assert len(rows) == 19
    path = tmp_path / "cg.csv"
    write_cg_csv(path)
    with open(path) as fh:
        data = list(csv.reader(fh))
    assert data[0] == ["j1", "m1", "j2", "m2", "J", "M", "value"]
    assert len(data) == 20
    for r in data[1:]:
        assert float(r[6]) == clebsch_gordan(*map(int, r[:6]))
