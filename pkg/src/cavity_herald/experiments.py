"""Coupling sweeps, feedback failure curves and trap feasibility bounds."""
from __future__ import annotations

import dataclasses
import io
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import constants

from .lindblad import IntegrationError, IntegratorConfig, steady_state_p
from .model import SystemParams
from .trajectories import ProtocolConfig, run_ensemble

# CODATA values via scipy.constants; cesium-133 mass from the NIST atomic-mass table.
HBAR = constants.hbar
PLANCK = constants.h
K_B = constants.k
CESIUM_MASS = 132.905451961 * constants.atomic_mass
CESIUM_D_LINE = 852.36e-9


@dataclass(frozen=True)
class SweepSpec:
    """Grid of g_L/kappa and g_R/kappa values (kappa = 1)."""

    gl_min: float = 0.2
    gl_max: float = 6.0
    gl_points: int = 30
    gr_min: float = 0.2
    gr_max: float = 6.0
    gr_points: int = 30
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        for axis in ("gl", "gr"):
            lo, hi, n = (getattr(self, f"{axis}_{k}") for k in ("min", "max", "points"))
            if lo <= 0 or hi <= 0:
                raise ValueError(f"{axis} axis values must be > 0")
            if hi < lo:
                raise ValueError(f"{axis}_max must be >= {axis}_min")
            if n < 1 or (n < 2 and hi != lo):
                raise ValueError(f"{axis}_points must be >= 2 for a non-degenerate axis")

    @property
    def gl_axis(self) -> np.ndarray:
        return np.linspace(self.gl_min, self.gl_max, self.gl_points)

    @property
    def gr_axis(self) -> np.ndarray:
        return np.linspace(self.gr_min, self.gr_max, self.gr_points)


@dataclass(frozen=True)
class SweepPoint:
    gl: float
    gr: float
    p: float
    converged: bool
    t_converged: float


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    points: tuple[SweepPoint, ...]

    def grid(self) -> np.ndarray:
        """p as an array indexed [g_R index, g_L index]."""
        return np.array([pt.p for pt in self.points]).reshape(
            self.spec.gl_points, self.spec.gr_points).T

    def ridge(self) -> list[tuple[float, float]]:
        """(g_L, argmax over g_R of p) per g_L column."""
        grid = self.grid()
        gr = self.spec.gr_axis
        return [(float(gl), float(gr[np.nanargmax(grid[:, j])]))
                for j, gl in enumerate(self.spec.gl_axis)]

    def max_point(self) -> SweepPoint:
        return max((pt for pt in self.points if not math.isnan(pt.p)), key=lambda pt: pt.p)


def _sweep_point(args) -> SweepPoint:
    gl, gr, config = args
    try:
        res = steady_state_p(SystemParams(gl, gr, 1.0), config)
    except IntegrationError:
        return SweepPoint(gl, gr, float("nan"), False, float("nan"))
    return SweepPoint(gl, gr, res.p, res.converged, res.t_converged)


def sweep_p(spec: SweepSpec, workers: int | None = 1) -> SweepResult:
    tasks = [(float(gl), float(gr), spec.integrator)
             for gl in spec.gl_axis for gr in spec.gr_axis]
    workers = workers or os.cpu_count() or 1
    if workers <= 1:
        points = [_sweep_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_sweep_point, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return SweepResult(spec, tuple(points))


def sweep_csv(result: SweepResult, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    buf.write("gL_over_kappa,gR_over_kappa,p,converged,t_converged\n")
    for pt in result.points:
        buf.write(f"{pt.gl!r},{pt.gr!r},{pt.p!r},{str(pt.converged).lower()},{pt.t_converged!r}\n")
    return buf.getvalue()


def gnuplot_matrix(result: SweepResult) -> str:
    """Gnuplot ``nonuniform matrix`` text: first row g_L values, first column g_R values."""
    grid = result.grid()
    gl, gr = result.spec.gl_axis, result.spec.gr_axis
    lines = [" ".join([str(len(gl))] + [repr(float(x)) for x in gl])]
    for i, y in enumerate(gr):
        lines.append(" ".join([repr(float(y))] + [repr(float(v)) for v in grid[i]]))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FailurePoint:
    n: int
    analytic: float
    empirical: float
    stderr: float


def geometric_failure(p: float, n_max: int) -> list[float]:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return [(1.0 - p) ** n for n in range(1, n_max + 1)]


def failure_curve(params: SystemParams, protocol: ProtocolConfig, n_max: int,
                  n_trajectories: int = 100_000, p: float | None = None,
                  config: IntegratorConfig | None = None,
                  workers: int | None = 1) -> list[FailurePoint]:
    """Analytic (1-p)^n next to the Monte Carlo fraction with no D2 click after n rounds."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if p is None:
        p = steady_state_p(params, config).p
    protocol = dataclasses.replace(protocol, max_rounds=max(protocol.max_rounds, n_max))
    stats = run_ensemble(params, protocol, n_trajectories, workers=workers)
    out = []
    for n, q in enumerate(geometric_failure(p, n_max), start=1):
        out.append(FailurePoint(n, q, stats.failure_after(n),
                                math.sqrt(q * (1.0 - q) / n_trajectories)))
    return out


@dataclass(frozen=True)
class TrapParams:
    """FORT parameters; V0 is a trap depth quoted as a frequency in Hz (energy h * V0)."""

    lambda_T: float
    lam: float = CESIUM_D_LINE
    mass: float = CESIUM_MASS
    V0: float = 45e6

    def __post_init__(self):
        for name in ("lambda_T", "lam", "mass"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.V0 < 0:
            raise ValueError("V0 must be >= 0")
        for name in ("lambda_T", "lam"):
            v = getattr(self, name)
            if not 100e-9 <= v <= 10e-6:
                warnings.warn(f"{name} = {v!r} m is outside the optical range 100 nm - 10 um",
                              stacklevel=3)

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.lam

    @property
    def k_T(self) -> float:
        return 2.0 * math.pi / self.lambda_T


def hz_to_joule(f: float) -> float:
    return PLANCK * f


def joule_to_hz(e: float) -> float:
    return e / PLANCK


def joule_to_kelvin(e: float) -> float:
    return e / K_B


def kelvin_to_joule(t: float) -> float:
    return K_B * t


def lamb_dicke_min_depth(trap: TrapParams) -> float:
    """hbar^2 k^4 / (8 m k_T^2), returned in Hz (divided by h = 2 pi hbar)."""
    energy = HBAR**2 * trap.k**4 / (8.0 * trap.mass * trap.k_T**2)
    return joule_to_hz(energy)


def max_temperature(trap: TrapParams) -> float:
    """(hbar k_T / 2 k_B) sqrt(2 V0 / m) in kelvin, with V0 converted as h * V0."""
    v0 = hz_to_joule(trap.V0)
    return HBAR * trap.k_T / (2.0 * K_B) * math.sqrt(2.0 * v0 / trap.mass)
