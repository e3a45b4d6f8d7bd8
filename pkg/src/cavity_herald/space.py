"""Labeled Hilbert space and dense operator algebra for two atoms in a two-mode cavity.

Basis ordering is fixed: atom a varies slowest, then atom b, then the
left-mode occupation, then the right-mode occupation (fastest).  With a
Fock cutoff ``N`` the flat index of ``|a, b; n_L, n_R>`` is::

    ((a * 3 + b) * (N + 1) + n_L) * (N + 1) + n_R

where the atomic levels are ordered ``L < R < e``.  Units: hbar = 1.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-12


class AtomLevel(enum.IntEnum):
    L = 0
    R = 1
    E = 2

    @property
    def symbol(self) -> str:
        return "e" if self is AtomLevel.E else self.name


class Polarization(enum.Enum):
    L = "L"
    R = "R"


@dataclass(frozen=True, order=True)
class PhotonConfig:
    n_left: int = 0
    n_right: int = 0

    def __post_init__(self):
        if self.n_left < 0 or self.n_right < 0:
            raise ValueError("photon occupations must be non-negative")

    def count(self, pol: Polarization) -> int:
        return self.n_left if pol is Polarization.L else self.n_right


VACUUM = PhotonConfig(0, 0)
ONE_LEFT = PhotonConfig(1, 0)
ONE_RIGHT = PhotonConfig(0, 1)


@dataclass(frozen=True, order=True)
class BasisState:
    atom_a: AtomLevel
    atom_b: AtomLevel
    photons: PhotonConfig = VACUUM

    def swapped(self) -> BasisState:
        return BasisState(self.atom_b, self.atom_a, self.photons)

    @property
    def excitations(self) -> int:
        return (
            (self.atom_a is AtomLevel.E)
            + (self.atom_b is AtomLevel.E)
            + self.photons.n_left
            + self.photons.n_right
        )

    def __str__(self) -> str:
        p = self.photons
        if p == VACUUM:
            ph = "0"
        elif p == ONE_LEFT:
            ph = "L"
        elif p == ONE_RIGHT:
            ph = "R"
        else:
            ph = f"{p.n_left}L{p.n_right}R"
        return f"|{self.atom_a.symbol},{self.atom_b.symbol};{ph}>"


def ket(a: str, b: str, photons: PhotonConfig | str = VACUUM) -> BasisState:
    """Shorthand label constructor: ``ket("L", "L", "L")`` is |L,L;1_L>."""
    levels = {"L": AtomLevel.L, "R": AtomLevel.R, "e": AtomLevel.E, "E": AtomLevel.E}
    if isinstance(photons, str):
        photons = {"0": VACUUM, "L": ONE_LEFT, "R": ONE_RIGHT}[photons]
    return BasisState(levels[a], levels[b], photons)


# The eight states the single-photon dynamics can visit.
SINGLE_PHOTON_STATES = (
    ket("L", "L", "L"),
    ket("e", "L", "0"),
    ket("L", "e", "0"),
    ket("R", "L", "R"),
    ket("L", "R", "R"),
    ket("L", "L", "0"),
    ket("R", "L", "0"),
    ket("L", "R", "0"),
)


@dataclass(frozen=True)
class HilbertSpace:
    cutoff: int
    labels: tuple[BasisState, ...] = field(repr=False, compare=False)
    _index: dict = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def n_levels(self) -> int:
        return self.cutoff + 1

    def index(self, state: BasisState) -> int:
        try:
            return self._index[state]
        except KeyError:
            raise ValueError(f"{state} is outside the space (cutoff {self.cutoff})") from None

    def label(self, i: int) -> BasisState:
        return self.labels[i]

    def basis_vector(self, state: BasisState) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(state)] = 1.0
        return v

    def projector(self, states) -> np.ndarray:
        """Diagonal projector onto the span of the given basis labels."""
        P = np.zeros((self.dim, self.dim), dtype=complex)
        for s in states:
            i = self.index(s)
            P[i, i] = 1.0
        return P

    def excitation_numbers(self) -> np.ndarray:
        return np.array([s.excitations for s in self.labels])


def build_space(cutoff: int = 1) -> HilbertSpace:
    if int(cutoff) != cutoff or cutoff < 1:
        raise ValueError("Fock cutoff must be an integer >= 1")
    cutoff = int(cutoff)
    ns = range(cutoff + 1)
    labels = tuple(
        BasisState(a, b, PhotonConfig(nl, nr))
        for a, b, nl, nr in itertools.product(AtomLevel, AtomLevel, ns, ns)
    )
    return HilbertSpace(cutoff, labels, {s: i for i, s in enumerate(labels)})


def _frozen(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=complex)
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense complex matrix on a composite space.

    ``hermitian`` is a hint that is verified on construction.
    """

    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got shape {m.shape}")
        if self.hermitian:
            err = np.max(np.abs(m - m.conj().T), initial=0.0)
            if err >= HERMITIAN_TOL:
                raise ValueError(f"operator flagged Hermitian but |A - A^dag| = {err:.3e}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dag(self) -> Operator:
        return Operator(self.matrix.conj().T, self.hermitian)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) < tol)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            _check_dims(self.dim, other.dim)
            return Operator(self.matrix @ other.matrix)
        return apply(self, other)

    def __add__(self, other: Operator) -> Operator:
        _check_dims(self.dim, other.dim)
        return Operator(self.matrix + other.matrix, self.hermitian and other.hermitian)

    def __sub__(self, other: Operator) -> Operator:
        _check_dims(self.dim, other.dim)
        return Operator(self.matrix - other.matrix, self.hermitian and other.hermitian)

    def __mul__(self, scalar) -> Operator:
        herm = self.hermitian and np.isreal(scalar)
        return Operator(self.matrix * scalar, bool(herm))

    __rmul__ = __mul__

    def __neg__(self) -> Operator:
        return Operator(-self.matrix, self.hermitian)


def _check_dims(d1: int, d2: int):
    if d1 != d2:
        raise ValueError(f"dimension mismatch: {d1} vs {d2}")


def identity(space: HilbertSpace) -> Operator:
    return Operator(np.eye(space.dim), hermitian=True)


def zero_operator(space: HilbertSpace) -> Operator:
    return Operator(np.zeros((space.dim, space.dim)), hermitian=True)


def annihilation_op(space: HilbertSpace, polarization: Polarization | str) -> Operator:
    """Truncated bosonic lowering operator on one cavity mode."""
    pol = Polarization(polarization)
    m = np.zeros((space.dim, space.dim), dtype=complex)
    for j, s in enumerate(space.labels):
        n = s.photons.count(pol)
        if n == 0:
            continue
        if pol is Polarization.L:
            lowered = PhotonConfig(n - 1, s.photons.n_right)
        else:
            lowered = PhotonConfig(s.photons.n_left, n - 1)
        i = space.index(BasisState(s.atom_a, s.atom_b, lowered))
        m[i, j] = np.sqrt(n)
    return Operator(m)


def creation_op(space: HilbertSpace, polarization: Polarization | str) -> Operator:
    return annihilation_op(space, polarization).dag()


def number_op(space: HilbertSpace, polarization: Polarization | str) -> Operator:
    pol = Polarization(polarization)
    return Operator(np.diag([float(s.photons.count(pol)) for s in space.labels]), hermitian=True)


def atomic_transition_op(
    space: HilbertSpace, atom: str, from_level: AtomLevel, to_level: AtomLevel
) -> Operator:
    """``|to><from|`` acting on atom ``'a'`` or ``'b'``, identity elsewhere."""
    if atom not in ("a", "b"):
        raise ValueError(f"atom must be 'a' or 'b', got {atom!r}")
    from_level, to_level = AtomLevel(from_level), AtomLevel(to_level)
    m = np.zeros((space.dim, space.dim), dtype=complex)
    for j, s in enumerate(space.labels):
        current = s.atom_a if atom == "a" else s.atom_b
        if current is not from_level:
            continue
        if atom == "a":
            target = BasisState(to_level, s.atom_b, s.photons)
        else:
            target = BasisState(s.atom_a, to_level, s.photons)
        m[space.index(target), j] = 1.0
    return Operator(m, hermitian=from_level is to_level)


def swap_operator(space: HilbertSpace) -> Operator:
    """Permutation exchanging the states of atoms a and b."""
    m = np.zeros((space.dim, space.dim), dtype=complex)
    for j, s in enumerate(space.labels):
        m[space.index(s.swapped()), j] = 1.0
    return Operator(m, hermitian=True)


def apply(op: Operator, state: np.ndarray) -> np.ndarray:
    state = np.asarray(state)
    if state.shape[0] != op.dim:
        raise ValueError(f"dimension mismatch: operator {op.dim}, state {state.shape[0]}")
    return op.matrix @ state


def commutator(a: Operator, b: Operator) -> Operator:
    _check_dims(a.dim, b.dim)
    return Operator(a.matrix @ b.matrix - b.matrix @ a.matrix)


def expectation(op: Operator, state: np.ndarray) -> complex:
    """<psi|A|psi> for a vector, Tr(rho A) for a density matrix."""
    state = np.asarray(state)
    if state.shape[0] != op.dim:
        raise ValueError(f"dimension mismatch: operator {op.dim}, state {state.shape[0]}")
    if state.ndim == 1:
        return complex(np.vdot(state, op.matrix @ state))
    return complex(np.trace(state @ op.matrix))


def ket_to_dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi)
    return np.outer(psi, psi.conj())


def fidelity_pure(psi: np.ndarray, phi: np.ndarray) -> float:
    """|<phi|psi>|^2 for normalized kets."""
    return float(abs(np.vdot(phi, psi)) ** 2)


def check_density_matrix(rho: np.ndarray, trace_tol: float = 1e-8, herm_tol: float = 1e-10,
                         pos_tol: float = 1e-8) -> None:
    """Raise ValueError if ``rho`` violates trace, Hermiticity or positivity."""
    rho = np.asarray(rho)
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise ValueError(f"density matrix not Hermitian: {herm:.3e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace {tr!r} != 1")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lam < -pos_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lam:.3e}")


def expm(a: np.ndarray, tol: float = 1e-16) -> np.ndarray:
    """Matrix exponential by scaling and squaring around a Taylor core.

    The argument is scaled by 2**-s until its 1-norm is at most 1/2, the
    Taylor series is summed until the next term drops below ``tol`` relative
    to the partial sum, and the result is squared s times.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    norm = np.linalg.norm(a, 1)
    s = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    b = a / 2.0**s
    result = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, 60):
        term = term @ b / k
        result = result + term
        if np.linalg.norm(term, 1) <= tol * np.linalg.norm(result, 1):
            break
    for _ in range(s):
        result = result @ result
    return result
