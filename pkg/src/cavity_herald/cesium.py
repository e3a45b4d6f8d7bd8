"""Cesium (6S1/2, F=3) <-> (6P1/2, F=3) realization of the three-level scheme.

Polarization convention (hard-coded): e_m <-> g_{m-1} is driven by
right-circular light and e_m <-> g_{m+1} by left-circular light.  With the
photon carrying angular momentum (1, q) and m_e = m_g + q, left light is
q = -1 and right light is q = +1.  Only |CG| enters the couplings, so the
Condon-Shortley phase never matters here.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .space import Polarization

F_CESIUM = 3
PHOTON_Q = {Polarization.L: -1, Polarization.R: +1}


def _half_int(x, name: str) -> Fraction:
    f = Fraction(x).limit_denominator(2)
    if abs(float(f) - float(x)) > 1e-12 or f.denominator not in (1, 2):
        raise ValueError(f"{name}={x!r} is not an integer or half-integer")
    return f


def _fact(x: Fraction) -> int:
    return math.factorial(int(x))


def clebsch_gordan_squared(j1, m1, j2, m2, J, M) -> tuple[int, Fraction]:
    """Exact (sign, CG**2) for <j1 m1; j2 m2 | J M> via the Racah sum."""
    j1, m1 = _half_int(j1, "j1"), _half_int(m1, "m1")
    j2, m2 = _half_int(j2, "j2"), _half_int(m2, "m2")
    J, M = _half_int(J, "J"), _half_int(M, "M")
    for j, m, name in ((j1, m1, "1"), (j2, m2, "2"), (J, M, "")):
        if j < 0:
            raise ValueError(f"j{name} must be >= 0")
        if abs(m) > j or (j - m).denominator != 1:
            raise ValueError(f"invalid projection m{name}={m} for j{name}={j}")
    if m1 + m2 != M:
        return 0, Fraction(0)
    if not abs(j1 - j2) <= J <= j1 + j2 or (j1 + j2 + J).denominator != 1:
        return 0, Fraction(0)

    pre = Fraction(
        int(2 * J + 1) * _fact(J + j1 - j2) * _fact(J - j1 + j2) * _fact(j1 + j2 - J),
        _fact(j1 + j2 + J + 1),
    )
    pre *= (_fact(J + M) * _fact(J - M) * _fact(j1 - m1) * _fact(j1 + m1)
            * _fact(j2 - m2) * _fact(j2 + m2))
    k_min = int(max(0, j2 - J - m1, j1 - J + m2))
    k_max = int(min(j1 + j2 - J, j1 - m1, j2 + m2))
    total = Fraction(0)
    for k in range(k_min, k_max + 1):
        den = (math.factorial(k) * _fact(j1 + j2 - J - k) * _fact(j1 - m1 - k)
               * _fact(j2 + m2 - k) * _fact(J - j2 + m1 + k) * _fact(J - j1 - m2 + k))
        total += Fraction((-1) ** k, den)
    if total == 0:
        return 0, Fraction(0)
    return (1 if total > 0 else -1), pre * total * total


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """<j1 m1; j2 m2 | J M> (Condon-Shortley phase).

    Selection-rule violations return 0; malformed quantum numbers raise.
    """
    sign, sq = clebsch_gordan_squared(j1, m1, j2, m2, J, M)
    if sign == 0:
        return 0.0
    return sign * math.sqrt(sq.numerator / sq.denominator)


@dataclass(frozen=True)
class HyperfineLevel:
    manifold: str  # "g" (6S1/2) or "e" (6P1/2)
    m_F: int
    F: int = F_CESIUM

    def __post_init__(self):
        if self.manifold not in ("g", "e"):
            raise ValueError("manifold must be 'g' or 'e'")
        if abs(self.m_F) > self.F:
            raise ValueError(f"|m_F| = {abs(self.m_F)} exceeds F = {self.F}")

    def __str__(self) -> str:
        return f"{self.manifold}_{self.m_F}"


@dataclass(frozen=True)
class CesiumCoupling:
    g0: float
    initial_m_F: int
    g_L: float
    g_R: float
    ground_left: HyperfineLevel
    excited: HyperfineLevel
    ground_right: HyperfineLevel
    cg_left: float
    cg_right: float

    @property
    def beta(self) -> float:
        return self.g_R / self.g_L


def dipole_cg(m_g: int, pol: Polarization, F: int = F_CESIUM) -> float:
    """<F m_g; 1 q | F m_g+q> for the photon polarization ``pol``."""
    q = PHOTON_Q[Polarization(pol)]
    if abs(m_g) > F or abs(m_g + q) > F:
        return 0.0
    return clebsch_gordan(F, m_g, 1, q, F, m_g + q)


def effective_couplings(g0: float, initial_m_F: int, F: int = F_CESIUM) -> CesiumCoupling:
    """Effective (g_L, g_R) of the Lambda system entered from |g_{m_F}>.

    Left absorption takes g_m to e_{m-1}; right emission from there lands
    in g_{m-2}.
    """
    if g0 < 0:
        raise ValueError("g0 must be >= 0")
    m = int(initial_m_F)
    if m != initial_m_F or abs(m) > F:
        raise ValueError(f"initial m_F must be an integer in [-{F}, {F}]")
    m_e, m_r = m + PHOTON_Q[Polarization.L], m + PHOTON_Q[Polarization.L] - PHOTON_Q[Polarization.R]
    if abs(m_e) > F:
        raise ValueError(f"|g_{m}> has no excited partner reachable by left-circular light")
    if abs(m_r) > F:
        raise ValueError(f"e_{m_e} has no ground partner reachable by right-circular emission")
    cg_l = dipole_cg(m, Polarization.L, F)
    cg_r = dipole_cg(m_r, Polarization.R, F)
    if cg_l == 0 or cg_r == 0:
        raise ValueError(f"|g_{m}> does not form a Lambda system (vanishing Clebsch-Gordan coefficient)")
    return CesiumCoupling(
        g0=g0, initial_m_F=m, g_L=g0 * abs(cg_l), g_R=g0 * abs(cg_r),
        ground_left=HyperfineLevel("g", m, F), excited=HyperfineLevel("e", m_e, F),
        ground_right=HyperfineLevel("g", m_r, F), cg_left=cg_l, cg_right=cg_r,
    )


def reachable_levels(initial_m_F: int, F: int = F_CESIUM) -> set[tuple[str, str]]:
    """Single-atom (level, photon) pairs reachable from |g_m; 1_L> with one excitation.

    Walks the full 7+7 sublevel structure: absorption of a lam photon takes
    g_mg to e_{mg+q} with amplitude CG(mg, lam); emission is the reverse.
    """
    start = (HyperfineLevel("g", initial_m_F, F), Polarization.L)
    seen = {start}
    queue = deque([start])
    while queue:
        level, photon = queue.popleft()
        nbrs = []
        if level.manifold == "g" and photon is not None:
            if dipole_cg(level.m_F, photon, F) != 0:
                nbrs.append((HyperfineLevel("e", level.m_F + PHOTON_Q[photon], F), None))
        elif level.manifold == "e":
            for pol in Polarization:
                m_g = level.m_F - PHOTON_Q[pol]
                if abs(m_g) <= F and dipole_cg(m_g, pol, F) != 0:
                    nbrs.append((HyperfineLevel("g", m_g, F), pol))
        for nb in nbrs:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return {(str(lv), ph.value if ph else "0") for lv, ph in seen}


@lru_cache(maxsize=8)
def cg_table(F: int = F_CESIUM) -> tuple[tuple, ...]:
    """All <F m1; 1 q | F M> entries (including zeros), as (j1, m1, j2, m2, J, M, value)."""
    rows = []
    for m1 in range(-F, F + 1):
        for q in (-1, 0, 1):
            M = m1 + q
            if abs(M) > F:
                continue
            rows.append((F, m1, 1, q, F, M, clebsch_gordan(F, m1, 1, q, F, M)))
    return tuple(rows)


def write_cg_csv(path, F: int = F_CESIUM) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j1", "m1", "j2", "m2", "J", "M", "value"])
        for row in cg_table(F):
            w.writerow([*row[:6], repr(row[6])])


# Reference (g_L, g_R) in units of g0 for the two worked cesium examples.  The
# m_F = 0 entry lists the legs in the opposite order to effective_couplings().
QUOTED_COUPLINGS = {
    1: (1 / math.sqrt(2), 1 / math.sqrt(2)),
    0: (math.sqrt(5 / 12), 1 / math.sqrt(2)),
}
