"""
Bichromatic Rabi couplings between the 16 ground and 16 excited sublevels
under the rotating-wave approximation.
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import FrozenSet, Optional

import numpy as np
from scipy.constants import c, epsilon_0, hbar

from atomic_model import (AtomicConstants, LEVELS, Manifold, N_GROUND, N_LEVELS,
                          clebsch_gordan, decompose, load_constants)
from errors import QuantumNumberError

logger = logging.getLogger(__name__)

# rows 1..7 (ground F=3) see the omega_1 field, rows 8..16 (ground F=4) omega_2
FIELD1_ROWS = slice(0, 7)
FIELD2_ROWS = slice(7, 16)


class PolarizationKind(str, Enum):
    SIGMA_PLUS_PAIR = "sigma_plus_pair"
    SIGMA_MINUS_PAIR = "sigma_minus_pair"
    LIN_LIN = "lin_lin"


@dataclass(frozen=True)
class PolarizationScheme:
    kind: PolarizationKind
    theta: float = 0.0

    def __post_init__(self):
        kind = PolarizationKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is PolarizationKind.LIN_LIN:
            theta = math.fmod(float(self.theta), math.pi)
            if theta < 0:
                theta += math.pi
            object.__setattr__(self, "theta", theta)
        else:
            object.__setattr__(self, "theta", 0.0)

    @classmethod
    def sigma_plus(cls) -> "PolarizationScheme":
        return cls(PolarizationKind.SIGMA_PLUS_PAIR)

    @classmethod
    def sigma_minus(cls) -> "PolarizationScheme":
        return cls(PolarizationKind.SIGMA_MINUS_PAIR)

    @classmethod
    def lin_lin(cls, theta: float) -> "PolarizationScheme":
        return cls(PolarizationKind.LIN_LIN, theta)

    @property
    def label(self) -> str:
        if self.kind is PolarizationKind.LIN_LIN:
            if self.theta == 0.0:
                return "lin_par_lin"
            if math.isclose(self.theta, math.pi / 2):
                return "lin_perp_lin"
            return f"lin_lin({self.theta:.4f})"
        return self.kind.value


def field_from_intensity(intensity: float) -> float:
    """Field amplitude (V/m) of a plane wave with intensity I = c*eps0*E^2/2 (W/m^2)"""
    if intensity < 0:
        raise ValueError(f"Intensity must be non-negative, got {intensity}")
    return math.sqrt(2 * intensity / (c * epsilon_0))


@dataclass(frozen=True)
class FieldAmplitudes:
    """Amplitudes (V/m) of the omega_1 and omega_2 components"""
    e1: float
    e2: float

    @classmethod
    def from_intensities(cls, i1: float, i2: float, total: bool = False) -> "FieldAmplitudes":
        """
        Build from intensities in W/m^2 (numerically equal to uW/mm^2).

        With `total=True` each argument is the intensity of the whole beam and
        every leg gets E/sqrt(2).
        """
        e1, e2 = field_from_intensity(i1), field_from_intensity(i2)
        if total:
            e1, e2 = e1 / math.sqrt(2), e2 / math.sqrt(2)
        return cls(e1, e2)

    def scaled(self, factor: float) -> "FieldAmplitudes":
        return FieldAmplitudes(self.e1 * factor, self.e2 * factor)


def _check_pair(s: int, t: int):
    ground, excited = decompose(s), decompose(t)
    if ground.manifold is not Manifold.GROUND:
        raise QuantumNumberError(f"Sublevel {s} is not a ground sublevel")
    if excited.manifold is not Manifold.EXCITED:
        raise QuantumNumberError(f"Sublevel {t} is not an excited sublevel")
    return ground, excited


def _rabi_circular(E: float, s: int, t: int, q: int, constants: Optional[AtomicConstants]) -> complex:
    constants = constants or load_constants()
    ground, excited = _check_pair(s, t)
    cg = clebsch_gordan(excited.F, excited.m_F, ground.F, ground.m_F, q)
    if cg == 0.0:
        return 0j
    return complex(-(E / hbar) * constants.dipole(ground.F, excited.F) * cg)


def rabi_sigma_plus(E: float, s: int, t: int, constants: Optional[AtomicConstants] = None) -> complex:
    """sigma+ Rabi frequency (rad/s) between ground `s` and excited `t` (1-based)"""
    return _rabi_circular(E, s, t, +1, constants)


def rabi_sigma_minus(E: float, s: int, t: int, constants: Optional[AtomicConstants] = None) -> complex:
    """sigma- Rabi frequency (rad/s) between ground `s` and excited `t` (1-based)"""
    return _rabi_circular(E, s, t, -1, constants)


def rabi_linear(E: float, theta: float, s: int, t: int,
                constants: Optional[AtomicConstants] = None) -> complex:
    """Rabi frequency for light linearly polarized at angle `theta` to x"""
    plus = rabi_sigma_plus(E, s, t, constants)
    minus = rabi_sigma_minus(E, s, t, constants)
    return (-np.exp(-1j * theta) / math.sqrt(2)) * plus + (np.exp(1j * theta) / math.sqrt(2)) * minus


def circular_matrix(q: int, constants: Optional[AtomicConstants] = None) -> np.ndarray:
    """16x16 matrix of -(1/hbar) d_FF' <F',m'|F,1,m,q>, i.e. Rabi frequencies per unit field"""
    constants = constants or load_constants()
    matrix = np.zeros((N_GROUND, N_LEVELS - N_GROUND), dtype=complex)
    for ground in LEVELS[:N_GROUND]:
        for excited in LEVELS[N_GROUND:]:
            cg = clebsch_gordan(excited.F, excited.m_F, ground.F, ground.m_F, q)
            if cg != 0.0:
                matrix[ground.index - 1, excited.index - 1 - N_GROUND] = (
                    -constants.dipole(ground.F, excited.F) * cg / hbar)
    return matrix


@dataclass(frozen=True)
class CouplingMatrix:
    """
    Rabi frequencies Omega_st (rad/s): rows are ground sublevels 1..16,
    columns excited sublevels 17..32.
    """
    omega: np.ndarray
    scheme: Optional[PolarizationScheme] = None
    fields: Optional[FieldAmplitudes] = None

    def __post_init__(self):
        if self.omega.shape != (N_GROUND, N_LEVELS - N_GROUND):
            raise ValueError(f"Coupling block must be 16x16, got {self.omega.shape}")
        self.omega.setflags(write=False)

    def element(self, s: int, t: int) -> complex:
        _check_pair(s, t)
        return complex(self.omega[s - 1, t - 1 - N_GROUND])

    def full(self) -> np.ndarray:
        """Hermitian 32x32 embedding with Omega_ts = conj(Omega_st)"""
        full = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
        full[:N_GROUND, N_GROUND:] = self.omega
        full[N_GROUND:, :N_GROUND] = self.omega.conj().T
        return full

    def without_excited(self, F_prime: int) -> "CouplingMatrix":
        """Copy with every coupling into the F' manifold set to zero"""
        omega = np.array(self.omega)
        for index in range(N_GROUND + 1, N_LEVELS + 1):
            if decompose(index).F == F_prime:
                omega[:, index - 1 - N_GROUND] = 0
        return replace(self, omega=omega)

    def rabi_product(self, g: int, e: int, F_prime: Optional[int] = None) -> complex:
        """Sum over excited u (optionally of one F') of Omega_gu * conj(Omega_eu)"""
        columns = [level.index - 1 - N_GROUND for level in LEVELS[N_GROUND:]
                   if F_prime is None or level.F == F_prime]
        return complex(np.sum(self.omega[g - 1, columns] * self.omega[e - 1, columns].conj()))


def build_bichromatic_coupling(scheme: PolarizationScheme, fields: FieldAmplitudes,
                               constants: Optional[AtomicConstants] = None) -> CouplingMatrix:
    """
    Couplings of the two-frequency field: ground F=3 rows are driven by E1,
    ground F=4 rows by E2. For lin_lin the omega_1 leg is along x and the
    omega_2 leg carries the angle theta.
    """
    constants = constants or load_constants()
    plus = circular_matrix(+1, constants)
    minus = circular_matrix(-1, constants)

    amplitude = np.zeros((N_GROUND, 1))
    amplitude[FIELD1_ROWS] = fields.e1
    amplitude[FIELD2_ROWS] = fields.e2

    if scheme.kind is PolarizationKind.SIGMA_PLUS_PAIR:
        omega = amplitude * plus
    elif scheme.kind is PolarizationKind.SIGMA_MINUS_PAIR:
        omega = amplitude * minus
    else:
        theta = np.zeros((N_GROUND, 1))
        theta[FIELD2_ROWS] = scheme.theta
        omega = amplitude * ((-np.exp(-1j * theta) / math.sqrt(2)) * plus
                             + (np.exp(1j * theta) / math.sqrt(2)) * minus)

    logger.debug(f"Built {scheme.label} coupling with E1={fields.e1:.4g} V/m, E2={fields.e2:.4g} V/m")
    return CouplingMatrix(np.asarray(omega, dtype=complex), scheme, fields)


def dark_ground_states(coupling: CouplingMatrix, tuned_manifold: int, atol: float = 0.0) -> FrozenSet[int]:
    """Ground sublevels (1-based) with no coupling to any sublevel of the tuned F'"""
    if tuned_manifold not in (3, 4):
        raise QuantumNumberError(f"Tuned manifold must be F'=3 or F'=4, got {tuned_manifold}")
    columns = [level.index - 1 - N_GROUND for level in LEVELS[N_GROUND:] if level.F == tuned_manifold]
    block = np.abs(coupling.omega[:, columns])
    return frozenset(int(s) + 1 for s in np.flatnonzero(np.all(block <= atol, axis=1)))
