"""
Closed-form description of a single CPT resonance between |3,m_g> and
|4,m_e>: width, light shift, amplitude factor C, the symmetric plus
antisymmetric Lorentzian lineshape and the double-Lambda dark-state
conditions.

Same-manifold ground coherences are neglected throughout this module; the
full solver keeps them.
"""
import cmath
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from atomic_model import (AtomicConstants, Manifold, N_GROUND, decompose, excited_indices,
                          ground_index, index_of, load_constants)
from coupling import CouplingMatrix, FieldAmplitudes, rabi_sigma_minus, rabi_sigma_plus
from errors import InvalidLambdaSystem

logger = logging.getLogger(__name__)


def symmetric_lorentzian(x, w):
    """S(x, w) = w / (x^2 + w^2)"""
    return w / (np.square(x) + w ** 2)


def antisymmetric_lorentzian(x, w):
    """A(x, w) = x / (x^2 + w^2)"""
    return x / (np.square(x) + w ** 2)


@dataclass(frozen=True)
class LambdaSystem:
    """
    Ground pair g (F=3, index 1..7) and e (F=4, index 8..16) with the
    participating excited sublevels; gamma_f = Gamma/2.
    """
    g: int
    e: int
    excited: Tuple[int, ...]
    gamma_f: float

    @classmethod
    def build(cls, m_g: int, m_e: int, coupling: CouplingMatrix, Gamma: float,
              tuned: Optional[int] = None) -> "LambdaSystem":
        g, e = ground_index(3, m_g), ground_index(4, m_e)
        excited = tuple(excited_indices(tuned))
        shared = [u for u in excited_indices()
                  if coupling.element(g, u) != 0 and coupling.element(e, u) != 0]
        if not shared:
            raise InvalidLambdaSystem(f"No excited sublevel couples to both |3,{m_g}> and |4,{m_e}>")
        return cls(g, e, excited, Gamma / 2)

    @property
    def label(self) -> Tuple[int, int]:
        return decompose(self.g).m_F, decompose(self.e).m_F


@dataclass(frozen=True)
class LineshapeParams:
    width: float
    light_shift: float
    amplitude: complex
    center_offset: float     # delta_g - delta_e at zero Raman detuning


def _legs(system: LambdaSystem, coupling: CouplingMatrix, detunings: np.ndarray):
    columns = np.array(system.excited) - 1 - N_GROUND
    omega_g = coupling.omega[system.g - 1, columns]
    omega_e = coupling.omega[system.e - 1, columns]
    delta_u = detunings[np.array(system.excited) - 1]
    return omega_g, omega_e, delta_u, detunings[system.g - 1], detunings[system.e - 1]


def width(system: LambdaSystem, coupling: CouplingMatrix, detunings: np.ndarray,
          decay: np.ndarray) -> float:
    """Half width Delta_width (rad/s) of the ground coherence resonance, summed over system.excited"""
    omega_g, omega_e, delta_u, delta_g, delta_e = _legs(system, coupling, detunings)
    gf = system.gamma_f
    pumping = (np.abs(omega_g) ** 2 * gf / (gf ** 2 + (delta_u - delta_e) ** 2)
               + np.abs(omega_e) ** 2 * gf / (gf ** 2 + (delta_u - delta_g) ** 2))
    return float(0.5 * (decay[system.g - 1] + decay[system.e - 1]) + 0.25 * np.sum(pumping))


def light_shift(system: LambdaSystem, coupling: CouplingMatrix, detunings: np.ndarray) -> float:
    """
    Light shift Delta_LS (rad/s) of the resonance centre, in the sign
    convention of the solver's -i(delta_l - delta_m) term: the resonance
    sits where delta_g - delta_e = Delta_LS. The two legs enter with
    opposite signs, so a Lambda with equal Stark shifts on g and e does
    not move.
    """
    omega_g, omega_e, delta_u, delta_g, delta_e = _legs(system, coupling, detunings)
    gf = system.gamma_f
    shift = (np.abs(omega_g) ** 2 * (delta_u - delta_e) / (gf ** 2 + (delta_u - delta_e) ** 2)
             + np.abs(omega_e) ** 2 * (delta_g - delta_u) / (gf ** 2 + (delta_u - delta_g) ** 2))
    return float(0.25 * np.sum(shift))


def amplitude_C(system: LambdaSystem, coupling: CouplingMatrix, populations: Tuple[float, float],
                delta_opt: float, constants: Optional[AtomicConstants] = None) -> complex:
    """
    Amplitude factor C from the F'=3 and F'=4 Rabi-product sums, with
    populations = (rho_gg, rho_ee).
    """
    constants = constants or load_constants()
    rho_gg, rho_ee = populations
    gf = system.gamma_f
    half = constants.hfs_excited / 2
    total = 0j
    for F_prime, offset in ((3, delta_opt + half), (4, delta_opt - half)):
        product = coupling.rabi_product(system.g, system.e, F_prime)
        weight = gf / (4 * (gf ** 2 + offset ** 2))
        total -= weight * ((rho_gg + rho_ee) + 1j * (rho_gg - rho_ee) * offset / gf) * product
    return complex(total)


def manifold_detuning(detunings: np.ndarray, F_prime: int) -> float:
    """Mean rotating-frame detuning of the F' sublevels"""
    indices = np.array(excited_indices(F_prime)) - 1
    return float(np.mean(detunings[indices]))


@dataclass(frozen=True)
class AnalyticSpectrum:
    delta_r: np.ndarray
    re_rho_ge: np.ndarray
    f2: np.ndarray
    params: LineshapeParams


def lineshape_params(system: LambdaSystem, coupling: CouplingMatrix, detunings: np.ndarray,
                     decay: np.ndarray, populations: Tuple[float, float], delta_opt: float,
                     delta_r: float = 0.0, constants: Optional[AtomicConstants] = None) -> LineshapeParams:
    """
    Width, light shift and C evaluated with `detunings` taken at Raman
    detuning `delta_r`.
    """
    offset = float(detunings[system.g - 1] - detunings[system.e - 1]) - delta_r
    params = LineshapeParams(
        width=width(system, coupling, detunings, decay),
        light_shift=light_shift(system, coupling, detunings),
        amplitude=amplitude_C(system, coupling, populations, delta_opt, constants),
        center_offset=offset,
    )
    logger.debug(f"Lineshape {system.label}: width {params.width:.4e}, light shift {params.light_shift:.4e} rad/s")
    return params


def analytic_spectrum(system: LambdaSystem, params: LineshapeParams, delta_r: Sequence[float],
                      coupling: CouplingMatrix, detunings: np.ndarray,
                      populations: Tuple[float, float], alpha: float = 1.0,
                      tuned: Optional[int] = None) -> AnalyticSpectrum:
    """
    Re(rho_ge) and the CPT transmittance term F2 of the tuned F' as
    functions of Raman detuning. `detunings` are those at zero Raman
    detuning; the ground entries move by +-delta_r/2.
    """
    delta_r = np.asarray(delta_r, dtype=float)
    rho_gg, rho_ee = populations
    x = params.center_offset + delta_r - params.light_shift
    w = params.width
    C = params.amplitude
    re_rho = (-C.real * w + C.imag * x) / (w ** 2 + x ** 2)

    Gamma = 2 * system.gamma_f
    tuned_levels = (tuned,) if tuned is not None else (3, 4)
    f2 = np.zeros_like(delta_r)
    delta_g = detunings[system.g - 1] + delta_r / 2
    delta_e = detunings[system.e - 1] - delta_r / 2
    for F_prime in tuned_levels:
        delta_f = manifold_detuning(detunings, F_prime)
        product = abs(coupling.rabi_product(system.g, system.e, F_prime)) ** 2
        prefactor = alpha / (8 * Gamma) * symmetric_lorentzian(delta_f, system.gamma_f) ** 2 * product
        asymmetry = (delta_f * (rho_gg - rho_ee) - delta_g * rho_gg + delta_e * rho_ee) / system.gamma_f
        f2 = f2 + prefactor * (symmetric_lorentzian(x, w) * (rho_gg + rho_ee)
                               + antisymmetric_lorentzian(x, w) * asymmetry)
    return AnalyticSpectrum(delta_r, re_rho, f2, params)


def transparency_term(system: LambdaSystem, coupling: CouplingMatrix, params: LineshapeParams,
                      populations: Tuple[float, float], x: float, F_prime: int = 3) -> float:
    """
    Ground-coherence share of the double-Lambda transmittance near line
    centre, -(rho_gg + rho_ee)/(4 gamma_f) * S(x, width) * |sum Omega* Omega|^2.
    """
    rho_gg, rho_ee = populations
    product = abs(coupling.rabi_product(system.g, system.e, F_prime)) ** 2
    return float(-(rho_gg + rho_ee) / (4 * system.gamma_f)
                 * symmetric_lorentzian(x, params.width) * product)


class DarkStateClass(str, Enum):
    COMMON_DARK = "common_dark"
    MUTUALLY_BRIGHT = "mutually_bright"
    NEITHER = "neither"
    INAPPLICABLE = "inapplicable"


@dataclass(frozen=True)
class DoubleLambdaLegs:
    """
    sigma legs of the (m, m) double-Lambda through F'=3:
    s=|3,m>, s'=|4,m>, t=|3',m+1>, t'=|3',m-1>; 1 marks the omega_1 field.
    """
    plus_1st: complex
    plus_2s_t: complex
    minus_1st_: complex
    minus_2s_t_: complex


def double_lambda_legs(m: int, fields: FieldAmplitudes,
                       constants: Optional[AtomicConstants] = None) -> DoubleLambdaLegs:
    s, s_ = ground_index(3, m), ground_index(4, m)

    def leg(rabi, E, ground, m_prime):
        if abs(m_prime) > 3:
            return 0j
        return rabi(E, ground, index_of(Manifold.EXCITED, 3, m_prime), constants)

    return DoubleLambdaLegs(
        plus_1st=leg(rabi_sigma_plus, fields.e1, s, m + 1),
        plus_2s_t=leg(rabi_sigma_plus, fields.e2, s_, m + 1),
        minus_1st_=leg(rabi_sigma_minus, fields.e1, s, m - 1),
        minus_2s_t_=leg(rabi_sigma_minus, fields.e2, s_, m - 1),
    )


def dark_state_condition(theta: float, legs: DoubleLambdaLegs, rtol: float = 1e-9) -> DarkStateClass:
    """
    Classify a double-Lambda: a common dark state exists when
    e^{2i theta} = O2s't+ O1st'- / (O1st+ O2s't'-), the two Lambdas are
    mutually bright when e^{2i theta} = -O1st+ O1st'- / (O2s't+ O2s't'-).
    """
    plus = (legs.plus_1st, legs.plus_2s_t)
    minus = (legs.minus_1st_, legs.minus_2s_t_)
    plus_missing = all(v == 0 for v in plus)
    minus_missing = all(v == 0 for v in minus)
    if plus_missing and minus_missing:
        return DarkStateClass.INAPPLICABLE
    if plus_missing or minus_missing:
        # one channel entirely missing: a single Lambda
        return DarkStateClass.NEITHER
    if any(v == 0 for v in plus + minus):
        return DarkStateClass.INAPPLICABLE

    phase = cmath.exp(2j * theta)
    common = legs.plus_2s_t * legs.minus_1st_ / (legs.plus_1st * legs.minus_2s_t_)
    bright = -legs.plus_1st * legs.minus_1st_ / (legs.plus_2s_t * legs.minus_2s_t_)
    if abs(phase - common) <= rtol * max(1.0, abs(common)):
        return DarkStateClass.COMMON_DARK
    if abs(phase - bright) <= rtol * max(1.0, abs(bright)):
        return DarkStateClass.MUTUALLY_BRIGHT
    return DarkStateClass.NEITHER


def suppression_check(g: int, e: int, coupling: CouplingMatrix, F_prime: int = 3) -> float:
    """|sum_{u in F'} Omega_gu conj(Omega_eu)|^2; zero means the resonance is prohibited"""
    return abs(coupling.rabi_product(g, e, F_prime)) ** 2


def peak_center_quadratic(x: np.ndarray, y: np.ndarray, index: int) -> float:
    """Vertex of the parabola through the samples around `index`"""
    if index <= 0 or index >= len(x) - 1:
        return float(x[index])
    x0, x1, x2 = x[index - 1:index + 2]
    y0, y1, y2 = y[index - 1:index + 2]
    denominator = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denominator
    b = (x2 ** 2 * (y0 - y1) + x1 ** 2 * (y2 - y0) + x0 ** 2 * (y1 - y2)) / denominator
    if a == 0:
        return float(x1)
    return float(-b / (2 * a))


def width_to_fwhm(delta_width: float) -> float:
    """FWHM of the symmetric Lorentzian with half width Delta_width (same units)"""
    return 2.0 * delta_width
