import math

import numpy as np
import pytest

from cavity_herald.experiments import (
    CESIUM_MASS, SweepSpec, TrapParams, failure_curve, geometric_failure, gnuplot_matrix,
    hz_to_joule, joule_to_hz, joule_to_kelvin, kelvin_to_joule, lamb_dicke_min_depth,
    max_temperature, sweep_csv, sweep_p,
)
from cavity_herald.lindblad import steady_state_p
from cavity_herald.model import SystemParams
from cavity_herald.trajectories import ProtocolConfig


@pytest.fixture(scope="module")
def small_sweep():
    return sweep_p(SweepSpec(0.5, 3.0, 6, 0.5, 4.0, 8))


def test_sweep_shape_and_values(small_sweep):
    grid = small_sweep.grid()
    assert grid.shape == (8, 6)
    assert all(pt.converged for pt in small_sweep.points)
    pt = small_sweep.points[7]
    assert pt.p == pytest.approx(steady_state_p(SystemParams(pt.gl, pt.gr, 1.0)).p)
    j, i = list(small_sweep.spec.gl_axis).index(pt.gl), list(small_sweep.spec.gr_axis).index(pt.gr)
    assert grid[i, j] == pt.p
    assert np.all((grid >= 0) & (grid <= 1))


def test_sweep_parallel_matches_serial(small_sweep):
    par = sweep_p(small_sweep.spec, workers=2)
    assert [p.p for p in par.points] == [p.p for p in small_sweep.points]


def test_sweep_csv_and_matrix(small_sweep):
    text = sweep_csv(small_sweep, ["schema_version: 1"])
    lines = text.splitlines()
    assert lines[0] == "# schema_version: 1"
    assert lines[1] == "gL_over_kappa,gR_over_kappa,p,converged,t_converged"
    assert len(lines) == 2 + 48
    first = lines[2].split(",")
    assert float(first[2]) == small_sweep.points[0].p
    mat = gnuplot_matrix(small_sweep).splitlines()
    assert len(mat) == 1 + 8
    assert mat[0].split()[0] == "6"
    assert float(mat[1].split()[0]) == pytest.approx(0.5)


def test_ridge_and_max(small_sweep):
    ridge = small_sweep.ridge()
    assert len(ridge) == 6
    best = small_sweep.max_point()
    assert best.p == max(pt.p for pt in small_sweep.points)


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(gl_min=0.0)
    with pytest.raises(ValueError):
        SweepSpec(gl_min=3.0, gl_max=1.0)
    with pytest.raises(ValueError):
        SweepSpec(gr_points=1)


def test_unconverged_point_is_flagged():
    from cavity_herald.lindblad import IntegratorConfig
    res = sweep_p(SweepSpec(1.0, 1.0, 1, 1.0, 1.0, 1, IntegratorConfig(t_max=0.5)))
    assert not res.points[0].converged


def test_geometric_failure():
    assert geometric_failure(0.5, 3) == [0.5, 0.25, 0.125]
    with pytest.raises(ValueError):
        geometric_failure(1.5, 2)


def test_failure_curve_within_bands():
    params = SystemParams(2.0, 2.0, 1.0)
    curve = failure_curve(params, ProtocolConfig(rng_seed=3), 6, n_trajectories=20000)
    assert [c.n for c in curve] == list(range(1, 7))
    for c in curve:
        assert abs(c.empirical - c.analytic) <= 3 * c.stderr


def test_unit_conversions():
    assert joule_to_hz(hz_to_joule(123.0)) == pytest.approx(123.0)
    assert joule_to_kelvin(kelvin_to_joule(4.2)) == pytest.approx(4.2)
    assert hz_to_joule(1.0) == pytest.approx(6.62607015e-34)


def test_trap_numbers():
    trap = TrapParams(869e-9)
    assert trap.mass == pytest.approx(2.2069e-25, rel=1e-4)
    assert lamb_dicke_min_depth(trap) == pytest.approx(536.93, rel=1e-4)
    assert max_temperature(trap) == pytest.approx(14.354e-6, rel=1e-4)
    # recoil-energy form: E_r (k/k_T)^2 / 4 with E_r = hbar^2 k^2 / 2m
    hbar = 1.054571817e-34
    k, kt = 2 * math.pi / trap.lam, 2 * math.pi / trap.lambda_T
    er = hbar**2 * k**2 / (2 * CESIUM_MASS)
    assert lamb_dicke_min_depth(trap) == pytest.approx(er * (k / kt) ** 2 / 4 / 6.62607015e-34, rel=1e-8)


def test_temperature_scales_with_root_depth():
    a = max_temperature(TrapParams(869e-9, V0=10e6))
    b = max_temperature(TrapParams(869e-9, V0=40e6))
    assert b / a == pytest.approx(2.0)


def test_trap_validation():
    with pytest.raises(ValueError):
        TrapParams(-1.0)
    with pytest.raises(ValueError):
        TrapParams(869e-9, V0=-1.0)
    with pytest.warns(UserWarning):
        TrapParams(869.0)
