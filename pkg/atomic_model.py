"""
Level structure of the 133Cs D1 line

Defines the 32 hyperfine Zeeman sublevels, the bundled atomic constants, the
Breit-Rabi Zeeman energies of both fine-structure manifolds, the detuning
vector of the rotating frame and a cached table of Clebsch-Gordan
coefficients.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.constants import hbar, physical_constants

from errors import QuantumNumberError

logger = logging.getLogger(__name__)

MU_B = physical_constants['Bohr magneton'][0]
DATA_FILE = Path(__file__).resolve().parent / "data" / "cs_d1_constants.txt"

N_LEVELS = 32
N_GROUND = 16
N_EXCITED = 16


class Manifold(str, Enum):
    GROUND = "ground"
    EXCITED = "excited"


@dataclass(frozen=True)
class Sublevel:
    """One hyperfine Zeeman sublevel; `index` is 1-based"""
    index: int
    manifold: Manifold
    F: int
    m_F: int


def _build_level_table() -> Tuple[Sublevel, ...]:
    levels = []
    index = 1
    for manifold in (Manifold.GROUND, Manifold.EXCITED):
        for F in (3, 4):
            for m_F in range(-F, F + 1):
                levels.append(Sublevel(index, manifold, F, m_F))
                index += 1
    return tuple(levels)


LEVELS: Tuple[Sublevel, ...] = _build_level_table()
_INDEX: Dict[Tuple[Manifold, int, int], int] = {
    (level.manifold, level.F, level.m_F): level.index for level in LEVELS
}


def index_of(manifold, F: int, m_F: int) -> int:
    """
    Map quantum numbers onto the 1..32 sublevel index.

    Args:
        manifold: Manifold or its string value ("ground"/"excited")
        F: hyperfine quantum number, 3 or 4
        m_F: magnetic quantum number

    Returns:
        1-based sublevel index
    """
    try:
        key = (Manifold(manifold), int(F), int(m_F))
    except ValueError:
        raise QuantumNumberError(f"Unknown manifold {manifold!r}")
    if key not in _INDEX:
        raise QuantumNumberError(f"No sublevel with manifold={key[0].value}, F={F}, m_F={m_F}")
    return _INDEX[key]


def decompose(index: int) -> Sublevel:
    if not 1 <= int(index) <= N_LEVELS:
        raise QuantumNumberError(f"Sublevel index {index} outside 1..{N_LEVELS}")
    return LEVELS[int(index) - 1]


def ground_index(F: int, m_F: int) -> int:
    return index_of(Manifold.GROUND, F, m_F)


def excited_indices(F_prime: Optional[int] = None) -> List[int]:
    """1-based indices of the excited sublevels, optionally restricted to one F'"""
    return [level.index for level in LEVELS
            if level.manifold is Manifold.EXCITED and (F_prime is None or level.F == F_prime)]


@dataclass(frozen=True)
class AtomicConstants:
    """Cs D1 constants in SI units; splittings are angular frequencies"""
    nuclear_spin: float
    hfs_ground: float
    hfs_excited: float
    gj_ground: float
    gi_ground: float
    gj_excited: float
    gi_excited: float
    reduced_dipole: float
    wavelength: float
    d33: float
    d34: float
    d43: float
    d44: float
    source: str = ""

    def dipole(self, F: int, F_prime: int) -> float:
        """Signed hyperfine dipole moment d_FF' in C*m"""
        factor = {(3, 3): self.d33, (3, 4): self.d34, (4, 3): self.d43, (4, 4): self.d44}[(F, F_prime)]
        return factor * self.reduced_dipole

    @property
    def omega_g0(self) -> float:
        """Zero-field energy of ground F=3 relative to the 6S1/2 centroid"""
        return _zero_field_energy(self.hfs_ground, self.nuclear_spin, upper=False)

    @property
    def omega_e0(self) -> float:
        """Zero-field energy of ground F=4 relative to the 6S1/2 centroid"""
        return _zero_field_energy(self.hfs_ground, self.nuclear_spin, upper=True)

    @property
    def omega_i0(self) -> float:
        """Midpoint of the zero-field F'=3 and F'=4 energies"""
        lower = _zero_field_energy(self.hfs_excited, self.nuclear_spin, upper=False)
        upper = _zero_field_energy(self.hfs_excited, self.nuclear_spin, upper=True)
        return 0.5 * (lower + upper)


_UNIT_SCALE = {"Hz": 2 * math.pi, "1": 1.0, "C*m": 1.0, "m": 1.0}

_CONSTANT_KEYS = {
    "nuclear_spin": "nuclear_spin",
    "ground_hfs": "hfs_ground",
    "excited_hfs": "hfs_excited",
    "ground_gj": "gj_ground",
    "ground_gi": "gi_ground",
    "excited_gj": "gj_excited",
    "excited_gi": "gi_excited",
    "d1_reduced_dipole": "reduced_dipole",
    "d1_wavelength": "wavelength",
    "dipole_factor_33": "d33",
    "dipole_factor_34": "d34",
    "dipole_factor_43": "d43",
    "dipole_factor_44": "d44",
}


@lru_cache(maxsize=None)
def load_constants(path: Optional[str] = None) -> AtomicConstants:
    """Read the constants file (key value unit), converting Hz to rad/s"""
    source = Path(path) if path else DATA_FILE
    try:
        table = pd.read_csv(source, sep=r"\s+", comment="#", header=None,
                            names=["key", "value", "unit"], dtype={"key": str, "unit": str})
    except FileNotFoundError:
        logger.error(f"Atomic constants file not found: {source}")
        raise

    values = {}
    for row in table.itertuples(index=False):
        if row.key not in _CONSTANT_KEYS:
            logger.warning(f"Ignoring unknown constant '{row.key}' in {source.name}")
            continue
        if row.unit not in _UNIT_SCALE:
            raise ValueError(f"Unsupported unit '{row.unit}' for constant '{row.key}'")
        values[_CONSTANT_KEYS[row.key]] = float(row.value) * _UNIT_SCALE[row.unit]

    missing = sorted(set(_CONSTANT_KEYS.values()) - set(values))
    if missing:
        raise ValueError(f"Constants file {source} is missing: {missing}")

    logger.debug(f"Loaded {len(values)} atomic constants from {source}")
    return AtomicConstants(source=str(source), **values)


def _zero_field_energy(hfs: float, nuclear_spin: float, upper: bool) -> float:
    shift = -hfs / (2 * (2 * nuclear_spin + 1))
    return shift + (0.5 * hfs if upper else -0.5 * hfs)


def breit_rabi(B: float, F: int, m_F: int, hfs: float, g_j: float, g_i: float,
               nuclear_spin: float) -> float:
    """
    Breit-Rabi energy (rad/s) of a J=1/2 hyperfine sublevel relative to the
    fine-structure centroid.

    Args:
        B: magnetic field in tesla
        F: I+1/2 selects the upper sign, I-1/2 the lower one
        m_F: magnetic quantum number
        hfs: hyperfine splitting (rad/s)
        g_j, g_i: electron and nuclear g-factors
        nuclear_spin: I
    """
    upper = F > nuclear_spin
    x = (g_j - g_i) * MU_B * B / (hbar * hfs)
    sign = 1.0 if upper else -1.0
    if m_F == -(nuclear_spin + 0.5):
        # stretched state: the square root must return 1 - x, not |1 - x|
        sign *= np.sign(1 - x) if x != 1 else 1.0
    root = np.sqrt(1 + 4 * m_F * x / (2 * nuclear_spin + 1) + x ** 2)
    return (-hfs / (2 * (2 * nuclear_spin + 1))
            + g_i * MU_B * m_F * B / hbar
            + sign * 0.5 * hfs * root)


@dataclass(frozen=True)
class ZeemanEnergies:
    """Sublevel energies at one field, plus the reference energies of the rotating frame"""
    omega_b: np.ndarray
    b_tesla: float
    omega_g0: float
    omega_e0: float
    omega_i0: float


def zeeman_energies(constants: AtomicConstants, B: float) -> ZeemanEnergies:
    """
    Breit-Rabi energies of all 32 sublevels at field B (tesla).

    Ground energies are referred to the 6S1/2 centroid, excited ones to the
    6P1/2 centroid; only differences within each manifold enter the
    rotating-frame detunings.
    """
    if B < 0 or not np.isfinite(B):
        raise QuantumNumberError(f"Magnetic field must be finite and non-negative, got {B}")

    omega = np.empty(N_LEVELS)
    for level in LEVELS:
        if level.manifold is Manifold.GROUND:
            params = (constants.hfs_ground, constants.gj_ground, constants.gi_ground)
        else:
            params = (constants.hfs_excited, constants.gj_excited, constants.gi_excited)
        omega[level.index - 1] = breit_rabi(B, level.F, level.m_F, *params, constants.nuclear_spin)
    omega.setflags(write=False)
    return ZeemanEnergies(omega, float(B), constants.omega_g0, constants.omega_e0, constants.omega_i0)


def detuning_vector(energies: ZeemanEnergies, delta_r: float, delta_opt: float) -> np.ndarray:
    """
    Rotating-frame detunings delta_l (rad/s) for Raman detuning `delta_r`
    and common optical detuning `delta_opt`.
    """
    omega = energies.omega_b
    delta = np.empty(N_LEVELS)
    delta[:7] = omega[:7] - energies.omega_g0 + delta_r / 2
    delta[7:16] = omega[7:16] - energies.omega_e0 - delta_r / 2
    delta[16:] = omega[16:] - energies.omega_i0 - delta_opt
    return delta


def tuned_delta_opt(constants: AtomicConstants, F_prime: int, offset: float = 0.0) -> float:
    """Common detuning that puts the light on the zero-field F' level, plus `offset`"""
    if F_prime not in (3, 4):
        raise QuantumNumberError(f"Tuned level must be F'=3 or F'=4, got {F_prime}")
    half = constants.hfs_excited / 2
    return (-half if F_prime == 3 else half) + offset


def raman_resonance(energies: ZeemanEnergies, m_g: int, m_e: int) -> float:
    """Raman detuning (rad/s) at which |3,m_g> and |4,m_e> are two-photon resonant"""
    omega = energies.omega_b
    g = ground_index(3, m_g) - 1
    e = ground_index(4, m_e) - 1
    return (omega[e] - energies.omega_e0) - (omega[g] - energies.omega_g0)


# -- angular momentum -------------------------------------------------------

def _fact(n: float) -> int:
    return math.factorial(int(round(n)))


def racah_cg(j1: float, m1: float, j2: float, m2: float, J: float, M: float) -> float:
    """<j1 m1 j2 m2 | J M> from the Racah closed form (Condon-Shortley phase)"""
    if abs(m1 + m2 - M) > 1e-9:
        return 0.0
    if not abs(j1 - j2) <= J <= j1 + j2:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(M) > J:
        return 0.0

    prefactor = ((2 * J + 1) * _fact(J + j1 - j2) * _fact(J - j1 + j2) * _fact(j1 + j2 - J)
                 / _fact(j1 + j2 + J + 1))
    prefactor *= (_fact(J + M) * _fact(J - M) * _fact(j1 - m1) * _fact(j1 + m1)
                  * _fact(j2 - m2) * _fact(j2 + m2))

    k_min = int(round(max(0, j2 - J - m1, j1 - J + m2)))
    k_max = int(round(min(j1 + j2 - J, j1 - m1, j2 + m2)))
    total = 0.0
    for k in range(k_min, k_max + 1):
        total += (-1) ** k / (_fact(k) * _fact(j1 + j2 - J - k) * _fact(j1 - m1 - k)
                              * _fact(j2 + m2 - k) * _fact(J - j2 + m1 + k) * _fact(J - j1 - m2 + k))
    return math.sqrt(prefactor) * total


_CG_TABLE: Optional[np.ndarray] = None


def _cg_slot(F_prime: int, m_prime: int, F: int, m_F: int, q: int) -> Tuple[int, int, int, int, int]:
    return F_prime - 3, m_prime + 4, F - 3, m_F + 4, q + 1


def build_cg_table() -> np.ndarray:
    """Dense table of <F',m'|F,1,m,q> for F, F' in {3,4}, indexed via _cg_slot"""
    table = np.zeros((2, 9, 2, 9, 3))
    for F_prime in (3, 4):
        for F in (3, 4):
            for m_F in range(-F, F + 1):
                for q in (-1, 0, 1):
                    m_prime = m_F + q
                    if abs(m_prime) > F_prime:
                        continue
                    table[_cg_slot(F_prime, m_prime, F, m_F, q)] = racah_cg(F, m_F, 1, q, F_prime, m_prime)
    return table


def cg_table() -> np.ndarray:
    global _CG_TABLE
    if _CG_TABLE is None:
        _CG_TABLE = build_cg_table()
        _CG_TABLE.setflags(write=False)
    return _CG_TABLE


def inject_cg_fault(delta: float = 1e-3, entry: Tuple[int, int, int, int, int] = (4, 4, 3, 3, 1)) -> None:
    """Perturb one cached CG entry; used to exercise the validation suite"""
    global _CG_TABLE
    table = cg_table().copy()
    table[_cg_slot(*entry)] += delta
    table.setflags(write=False)
    _CG_TABLE = table
    logger.warning(f"Injected CG fault of {delta} at <F',m'|F,1,m,q> = {entry}")


def reset_cg_table() -> None:
    global _CG_TABLE
    _CG_TABLE = None


def clebsch_gordan(F_prime: int, m_prime: int, F: int, m_F: int, q: int) -> float:
    """
    <F',m'_F | F,1,m_F,q>, zero for every forbidden combination.
    """
    if q not in (-1, 0, 1):
        raise QuantumNumberError(f"q must be -1, 0 or +1, got {q}")
    if m_prime != m_F + q or abs(m_F) > F or abs(m_prime) > F_prime:
        return 0.0
    if F in (3, 4) and F_prime in (3, 4):
        return float(cg_table()[_cg_slot(F_prime, m_prime, F, m_F, q)])
    return racah_cg(F, m_F, 1, q, F_prime, m_prime)
