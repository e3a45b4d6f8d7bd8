"""Quantum-jump trajectories with polarization-resolved detection and photon feedback.

Each round starts from |L,L;1_L> and evolves under the non-Hermitian
effective Hamiltonian until the squared norm falls to a pre-drawn uniform
threshold.  The jump channel is then chosen with probability proportional to
<c_lam^dag c_lam>.  A right-polarized jump leaves the atoms in
(|R,L> + |L,R>)/sqrt(2).  A left-polarized jump leaves |L,L;0>, and the
photon is either fed back into the cavity (next round) or lost.

Because every round starts from the same state, the no-jump evolution is
tabulated once per parameter set: exact propagator steps between grid nodes,
and Taylor coefficients of the state inside each interval so the squared
norm is a polynomial there and the jump time is found by bisection on it.

Random numbers: trajectory ``i`` of an ensemble with master seed ``s`` uses
``numpy.random.default_rng((s, i))`` (a SeedSequence hash of the pair), drawing
three uniforms per round (norm threshold, channel choice, efficiency
Bernoulli) in blocks.  Results are therefore independent of chunking, worker
count and completion order.
"""
from __future__ import annotations

import enum
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .lindblad import IntegratorConfig, reachable_support, steady_state_p
from .model import SystemParams, build_model, symmetric_ket
from .space import VACUUM, AtomLevel, BasisState, Polarization

TAYLOR_ORDER = 12
TABLE_STEP_FACTOR = 0.05
NORM_FLOOR = 1e-17
MAX_TABLE_NODES = 400_000
MAX_BISECTIONS = 200
ROUND_BLOCK = 16
CHUNK = 8192


class EventKind(str, enum.Enum):
    L_FEEDBACK = "L->feedback"
    L_D1 = "L->D1"
    L_LOST = "L->lost"
    R_D2 = "R->D2"
    R_LOST = "R->lost"


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    LOSS = "loss"
    MAX_ROUNDS = "max_rounds_exceeded"


_KINDS = list(EventKind)
_OUTCOMES = list(Outcome)


class JumpLocationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    """Detection/feedback settings.

    ``max_rounds=1`` is the single-shot scheme with detector D1 in place;
    larger values enable automatic re-injection of left-polarized photons.
    On the last permitted round a left photon goes to D1 instead.
    """

    detector_efficiency: float = 1.0
    feedback_efficiency: float = 1.0
    max_rounds: int = 1
    rng_seed: int = 0
    jump_time_tolerance: float = 1e-8
    dead_time: float = 0.0

    def __post_init__(self):
        for name in ("detector_efficiency", "feedback_efficiency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if int(self.max_rounds) != self.max_rounds or self.max_rounds < 1:
            raise ValueError("max_rounds must be an integer >= 1")
        if not self.jump_time_tolerance > 0:
            raise ValueError("jump_time_tolerance must be > 0")
        if self.dead_time < 0:
            raise ValueError("dead_time must be >= 0")


@dataclass(frozen=True)
class Event:
    time: float
    kind: EventKind


@dataclass(frozen=True)
class TrajectoryRecord:
    seed: tuple
    events: tuple[Event, ...]
    outcome: Outcome
    rounds_used: int
    final_atomic_state: str  # "LL" or "entangled"
    final_fidelity: float

    def to_json(self) -> str:
        return json.dumps({
            "seed": list(self.seed),
            "events": [{"time": e.time, "kind": e.kind.value} for e in self.events],
            "outcome": self.outcome.value,
            "rounds": self.rounds_used,
            "final_atomic_state": self.final_atomic_state,
            "final_fidelity": self.final_fidelity,
        })


@dataclass(frozen=True)
class EnsembleStats:
    n_trajectories: int
    success_fraction: float
    success_stderr: float
    p_estimate: float
    p_stderr: float
    outcome_counts: tuple[tuple[str, int], ...]
    rounds_histogram: tuple[tuple[int, int], ...]
    failure_curve: tuple[float, ...]
    mean_success_time: float
    min_success_fidelity: float
    records: tuple[TrajectoryRecord, ...] | None = field(default=None, repr=False, compare=False)

    def failure_after(self, n: int) -> float:
        return self.failure_curve[n - 1]

    def to_dict(self) -> dict:
        return {
            "n_trajectories": self.n_trajectories,
            "success_fraction": self.success_fraction,
            "success_stderr": self.success_stderr,
            "p_estimate": self.p_estimate,
            "p_stderr": self.p_stderr,
            "outcome_counts": dict(self.outcome_counts),
            "rounds_histogram": {str(k): v for k, v in self.rounds_histogram},
            "failure_curve": list(self.failure_curve),
            "mean_success_time": self.mean_success_time,
            "min_success_fidelity": self.min_success_fidelity,
        }


class NoJumpTable:
    """Tabulated no-jump evolution of |L,L;1_L> under H_eff."""

    def __init__(self, params: SystemParams):
        if params.kappa <= 0:
            raise ValueError("trajectories need kappa > 0")
        model = build_model(params)
        space = model.space
        self.params = params
        self.space = space
        heff = model.effective_hamiltonian.matrix
        i0 = space.index(params.initial_state)
        self.support = reachable_support(sp.csr_matrix(heff), [i0])
        gen = -1j * heff[np.ix_(self.support, self.support)]
        m = self.support.size
        labels = [space.labels[i] for i in self.support]
        self.n_left = np.array([s.photons.n_left for s in labels], dtype=float)
        self.n_right = np.array([s.photons.n_right for s in labels], dtype=float)
        self.step = TABLE_STEP_FACTOR / params.max_rate

        prop = scipy.linalg.expm(gen * self.step)
        psi = np.zeros(m, dtype=complex)
        psi[list(self.support).index(i0)] = 1.0
        nodes = [psi]
        while np.vdot(psi, psi).real > NORM_FLOOR:
            if len(nodes) >= MAX_TABLE_NODES:
                raise JumpLocationError("no-jump norm does not decay; jump time cannot be located")
            psi = prop @ psi
            nodes.append(psi)
        nodes = np.array(nodes)
        self.norms = np.einsum("ki,ki->k", nodes.conj(), nodes).real
        self._neg_norms = -self.norms
        self.n_intervals = len(nodes) - 1

        # V[k, n] = gen^n psi_k / n!  so psi(t_k + s) = sum_n s^n V[k, n]
        coeffs = [nodes]
        for n in range(1, TAYLOR_ORDER + 1):
            coeffs.append(coeffs[-1] @ gen.T / n)
        self.vec_coeffs = np.stack(coeffs, axis=1)  # (K+1, N+1, m)
        gram = np.einsum("kai,kbi->kab", self.vec_coeffs.conj(), self.vec_coeffs).real
        deg = 2 * TAYLOR_ORDER
        poly = np.zeros((len(nodes), deg + 1))
        for a in range(TAYLOR_ORDER + 1):
            for b in range(TAYLOR_ORDER + 1):
                poly[:, a + b] += gram[:, a, b]
        self.norm_poly = poly

        full_c = [c.matrix[:, self.support] for c in model.annihilators]
        self._post_maps = full_c  # (dim, m) per polarization
        self._targets = (
            space.basis_vector(BasisState(AtomLevel.L, AtomLevel.L, VACUUM)),
            symmetric_ket(space, VACUUM),
        )
        self._dark_check(heff, full_c)

    def _dark_check(self, heff, full_c):
        # Post-jump states must be stationary: no further jumps can follow.
        probe = self.vec_coeffs[: min(50, len(self.vec_coeffs)), 0]
        for c in full_c:
            post = probe @ c.T
            if np.max(np.abs(post @ heff.T), initial=0.0) > 1e-10 * max(1.0, self.params.max_rate):
                raise NotImplementedError("post-jump state is not stationary for this initial state")

    def norm_at(self, k: np.ndarray, s: np.ndarray) -> np.ndarray:
        y = np.zeros_like(s)
        for m in range(self.norm_poly.shape[1] - 1, -1, -1):
            y = y * s + self.norm_poly[k, m]
        return y

    def state_at(self, k: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Unnormalized support-basis states at t_k + s, shape (batch, m)."""
        s = s[:, None]
        y = np.zeros((k.size, self.support.size), dtype=complex)
        for n in range(TAYLOR_ORDER, -1, -1):
            y = y * s + self.vec_coeffs[k, n]
        return y

    def state_at_time(self, t: float) -> np.ndarray:
        k = min(int(t // self.step), self.n_intervals)
        s = t - k * self.step
        return self.state_at(np.array([k]), np.array([s]))[0]

    def embed(self, psi_sup: np.ndarray) -> np.ndarray:
        out = np.zeros(self.space.dim, dtype=complex)
        out[self.support] = psi_sup
        return out

    def jump_times(self, r: np.ndarray, rtol: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Times at which the squared norm falls to ``r``; returns (tau, k, s)."""
        k = np.searchsorted(self._neg_norms, -r, side="right") - 1
        if np.any(k >= self.n_intervals) or np.any(k < 0):
            raise JumpLocationError("norm threshold outside the tabulated range")
        lo = np.zeros_like(r)
        hi = np.full_like(r, self.step)
        t0 = k * self.step
        for _ in range(MAX_BISECTIONS):
            open_ = (hi - lo) > rtol * (t0 + hi)
            if not open_.any():
                break
            mid = 0.5 * (lo + hi)
            above = self.norm_at(k, mid) >= r
            lo = np.where(open_ & above, mid, lo)
            hi = np.where(open_ & ~above, mid, hi)
        else:
            raise JumpLocationError("jump-time bisection did not converge")
        s = 0.5 * (lo + hi)
        return t0 + s, k, s

    def channel_weights(self, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        prob = psi.real**2 + psi.imag**2
        w_l = np.zeros(psi.shape[0])
        w_r = np.zeros(psi.shape[0])
        for i in range(psi.shape[1]):
            w_l = w_l + self.n_left[i] * prob[:, i]
            w_r = w_r + self.n_right[i] * prob[:, i]
        return w_l, w_r

    def post_jump(self, psi: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Normalized post-jump states (batch, dim) and fidelity with the ideal outcome."""
        cl, cr = self._post_maps
        maps = np.where(right[:, None, None], cr[None], cl[None])
        post = (maps * psi[:, None, :]).sum(axis=-1)
        post = post / np.sqrt((post.real**2 + post.imag**2).sum(axis=-1))[:, None]
        target = np.where(right[:, None], self._targets[1][None], self._targets[0][None])
        ov = (target.conj() * post).sum(axis=-1)
        return post, ov.real**2 + ov.imag**2

    def sample(self, r: np.ndarray, u_mode: np.ndarray, rtol: float, with_states: bool = False):
        """Jump times, channel (True = right-polarized) and post-jump fidelity."""
        tau, k, s = self.jump_times(r, rtol)
        psi = self.state_at(k, s)
        w_l, w_r = self.channel_weights(psi)
        right = u_mode * (w_l + w_r) < w_r
        post, fid = self.post_jump(psi, right)
        if with_states:
            return tau, right, fid, post
        return tau, right, fid


@lru_cache(maxsize=16)
def no_jump_table(params: SystemParams) -> NoJumpTable:
    return NoJumpTable(params)


@dataclass
class _Chunk:
    seeds: list
    rounds: np.ndarray
    outcome: np.ndarray
    entangled: np.ndarray
    fidelity: np.ndarray
    first_right: np.ndarray
    event_time: np.ndarray
    event_kind: np.ndarray


def _uniforms(rng: np.random.Generator, rounds: int) -> np.ndarray:
    return rng.random((rounds, 3))


def _simulate(params: SystemParams, protocol: ProtocolConfig, seeds: list) -> _Chunk:
    table = no_jump_table(params)
    n = len(seeds)
    rngs = [np.random.default_rng(s) for s in seeds]
    block = min(protocol.max_rounds, ROUND_BLOCK)
    u = np.stack([_uniforms(g, block) for g in rngs])

    rounds = np.zeros(n, dtype=int)
    outcome = np.zeros(n, dtype=int)
    entangled = np.zeros(n, dtype=bool)
    fidelity = np.full(n, np.nan)
    first_right = np.zeros(n, dtype=bool)
    t_start = np.zeros(n)
    times, kinds = [], []
    eta_d, eta_f = protocol.detector_efficiency, protocol.feedback_efficiency

    active = np.arange(n)
    j = 0
    while active.size:
        if j >= u.shape[1]:
            u = np.concatenate([u, np.stack([_uniforms(g, block) for g in rngs])], axis=1)
        ua = u[active, j]
        tau, right, fid = table.sample(1.0 - ua[:, 0], ua[:, 1], protocol.jump_time_tolerance)
        t_jump = t_start[active] + tau
        rounds[active] = j + 1
        if j == 0:
            first_right[active] = right
        last = (j + 1) >= protocol.max_rounds
        if last:
            left_kind = np.where(ua[:, 2] < eta_d, _KINDS.index(EventKind.L_D1),
                                 _KINDS.index(EventKind.L_LOST))
        else:
            left_kind = np.where(ua[:, 2] < eta_f, _KINDS.index(EventKind.L_FEEDBACK),
                                 _KINDS.index(EventKind.L_LOST))
        right_kind = np.where(ua[:, 2] < eta_d, _KINDS.index(EventKind.R_D2),
                              _KINDS.index(EventKind.R_LOST))
        kind = np.where(right, right_kind, left_kind)

        col_t = np.full(n, np.nan)
        col_k = np.full(n, -1, dtype=int)
        col_t[active] = t_jump
        col_k[active] = kind
        times.append(col_t)
        kinds.append(col_k)

        cont = kind == _KINDS.index(EventKind.L_FEEDBACK)
        done = active[~cont]
        if last:
            code = np.where(right[~cont], _OUTCOMES.index(Outcome.LOSS), _OUTCOMES.index(Outcome.MAX_ROUNDS))
        else:
            code = np.full(done.size, _OUTCOMES.index(Outcome.LOSS))
        code[kind[~cont] == _KINDS.index(EventKind.R_D2)] = _OUTCOMES.index(Outcome.SUCCESS)
        outcome[done] = code
        entangled[done] = right[~cont]
        fidelity[done] = fid[~cont]
        t_start[active[cont]] = t_jump[cont] + protocol.dead_time
        active = active[cont]
        j += 1
    return _Chunk(seeds, rounds, outcome, entangled, fidelity, first_right,
                  np.stack(times, axis=1), np.stack(kinds, axis=1))


def _records(chunk: _Chunk) -> list[TrajectoryRecord]:
    out = []
    for i, seed in enumerate(chunk.seeds):
        r = chunk.rounds[i]
        events = tuple(Event(float(chunk.event_time[i, j]), _KINDS[chunk.event_kind[i, j]])
                       for j in range(r))
        out.append(TrajectoryRecord(
            seed=tuple(int(x) for x in np.atleast_1d(seed)),
            events=events,
            outcome=_OUTCOMES[chunk.outcome[i]],
            rounds_used=int(r),
            final_atomic_state="entangled" if chunk.entangled[i] else "LL",
            final_fidelity=float(chunk.fidelity[i]),
        ))
    return out


def run_trajectory(params: SystemParams, protocol: ProtocolConfig, seed) -> TrajectoryRecord:
    """Single trajectory; ``seed=(master, i)`` reproduces ensemble member ``i``."""
    return _records(_simulate(params, protocol, [seed]))[0]


def _simulate_range(args) -> _Chunk:
    params, protocol, start, stop = args
    return _simulate(params, protocol, [(protocol.rng_seed, i) for i in range(start, stop)])


def _map_chunks(params, protocol, n, workers):
    tasks = [(params, protocol, a, min(a + CHUNK, n)) for a in range(0, n, CHUNK)]
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(tasks) == 1:
        return [_simulate_range(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(_simulate_range, tasks))


def run_ensemble(params: SystemParams, protocol: ProtocolConfig, n: int,
                 workers: int | None = 1, keep_records: bool = False) -> EnsembleStats:
    if n < 1:
        raise ValueError("ensemble size must be >= 1")
    chunks = _map_chunks(params, protocol, n, workers)
    rounds = np.concatenate([c.rounds for c in chunks])
    outcome = np.concatenate([c.outcome for c in chunks])
    first_right = np.concatenate([c.first_right for c in chunks])
    fidelity = np.concatenate([c.fidelity for c in chunks])
    width = max(c.event_time.shape[1] for c in chunks)
    ev_t = np.concatenate([np.pad(c.event_time, ((0, 0), (0, width - c.event_time.shape[1])),
                                  constant_values=np.nan) for c in chunks])

    success = outcome == _OUTCOMES.index(Outcome.SUCCESS)
    s_frac = float(success.mean())
    p_hat = float(first_right.mean())
    success_rounds = rounds[success]
    counts = np.bincount(success_rounds, minlength=protocol.max_rounds + 1)
    cum = np.cumsum(counts)[1:]
    failure = tuple(float(1.0 - c / n) for c in cum)
    hist_vals, hist_counts = np.unique(rounds, return_counts=True)
    if success.any():
        t_success = ev_t[success, success_rounds - 1]
        mean_t = float(t_success.mean())
        min_fid = float(fidelity[success].min())
    else:
        mean_t = min_fid = float("nan")
    records = None
    if keep_records:
        records = tuple(r for c in chunks for r in _records(c))
    return EnsembleStats(
        n_trajectories=n,
        success_fraction=s_frac,
        success_stderr=math.sqrt(s_frac * (1 - s_frac) / n),
        p_estimate=p_hat,
        p_stderr=math.sqrt(p_hat * (1 - p_hat) / n),
        outcome_counts=tuple((o.value, int((outcome == i).sum())) for i, o in enumerate(_OUTCOMES)),
        rounds_histogram=tuple((int(a), int(b)) for a, b in zip(hist_vals, hist_counts)),
        failure_curve=failure,
        mean_success_time=mean_t,
        min_success_fidelity=min_fid,
        records=records,
    )


def write_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def ensemble_density_matrix(params: SystemParams, n: int, t: float, seed: int = 0) -> np.ndarray:
    """Average of single-trajectory states at time ``t`` without feedback.

    Uses the same random streams as ``run_ensemble`` with ``max_rounds=1``.
    """
    table = no_jump_table(params)
    u = np.stack([np.random.default_rng((seed, i)).random((1, 3))[0] for i in range(n)])
    tau, right, _, post = table.sample(1.0 - u[:, 0], u[:, 1], ProtocolConfig().jump_time_tolerance,
                                       with_states=True)
    jumped = tau <= t
    rho = np.zeros((table.space.dim, table.space.dim), dtype=complex)
    n_still = int((~jumped).sum())
    if n_still:
        psi = table.embed(table.state_at_time(t))
        psi /= np.linalg.norm(psi)
        rho += n_still * np.outer(psi, psi.conj())
    if jumped.any():
        post = post[jumped]
        rho += post.T @ post.conj()
    return rho / n


@dataclass(frozen=True, eq=False)
class ConditionalMixture:
    """Two-atom state (9x9, levels ordered L, R, e per atom) given no D2 click."""

    rho: np.ndarray = field(repr=False)
    weight_ll: float
    weight_entangled: float
    no_click_probability: float


def two_atom_ket(a: AtomLevel, b: AtomLevel) -> np.ndarray:
    v = np.zeros(9, dtype=complex)
    v[3 * a + b] = 1.0
    return v


def mixture_weights(p: float, protocol: ProtocolConfig) -> tuple[float, float, float]:
    """(weight |L,L>, weight entangled, P(no D2 click)) after all rounds have run."""
    eta_d, eta_f, m = protocol.detector_efficiency, protocol.feedback_efficiency, protocol.max_rounds
    carry = (1.0 - p) * eta_f  # chance a round hands over to the next one
    rounds_sum = sum(carry**k for k in range(m))  # sum_{k<m} carry^k
    ent = p * (1.0 - eta_d) * rounds_sum
    ll = (1.0 - p) * (1.0 - eta_f) * sum(carry**k for k in range(m - 1)) + (1.0 - p) * carry ** (m - 1)
    total = ent + ll
    if total <= 0.0:
        raise ValueError("no-click probability is zero; the conditional state is undefined")
    return ll / total, ent / total, total


def conditional_mixture(params: SystemParams, protocol: ProtocolConfig,
                        p: float | None = None,
                        config: IntegratorConfig | None = None) -> ConditionalMixture:
    """Atomic state once every round has ended without a D2 click."""
    if p is None:
        p = steady_state_p(params, config).p
    w_ll, w_ent, total = mixture_weights(p, protocol)
    ll = two_atom_ket(AtomLevel.L, AtomLevel.L)
    ent = (two_atom_ket(AtomLevel.R, AtomLevel.L) + two_atom_ket(AtomLevel.L, AtomLevel.R)) / math.sqrt(2)
    rho = w_ll * np.outer(ll, ll.conj()) + w_ent * np.outer(ent, ent.conj())
    return ConditionalMixture(rho, w_ll, w_ent, total)


__all__ = [
    "ConditionalMixture", "EnsembleStats", "Event", "EventKind", "NoJumpTable", "Outcome",
    "Polarization", "ProtocolConfig", "TrajectoryRecord", "conditional_mixture",
    "ensemble_density_matrix", "mixture_weights", "no_jump_table", "run_ensemble",
    "run_trajectory", "write_jsonl",
]
