"""
Physical outputs of a steady state: excited population, transmittance with
its one-photon / CPT decomposition, and resonance amplitudes.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from atomic_model import N_GROUND
from coupling import CouplingMatrix

logger = logging.getLogger(__name__)

# fraction of samples (both ends together) treated as far-detuned baseline
BASELINE_FRACTION = 0.10


def _matrix(rho) -> np.ndarray:
    return np.asarray(getattr(rho, "rho", rho))


def excited_population(rho) -> float:
    """Sum of the excited-state populations"""
    return float(np.real(np.trace(_matrix(rho)[N_GROUND:, N_GROUND:])))


def excited_population_via_coupling(rho, coupling: CouplingMatrix, Gamma: float) -> float:
    """
    Same quantity from the optical coherences, rho_nn = -sum_l Im(Omega_nl rho_ln) / Gamma,
    which holds at steady state.
    """
    matrix = _matrix(rho)
    omega_excited_ground = coupling.omega.conj().T
    rho_ground_excited = matrix[:N_GROUND, N_GROUND:]
    per_level = -np.imag(np.sum(omega_excited_ground * rho_ground_excited.T, axis=1)) / Gamma
    return float(np.sum(per_level))


def absorbed_fraction(rho, alpha: float = 1.0) -> float:
    """1 - T = alpha * sum of excited populations"""
    return alpha * excited_population(rho)


@dataclass(frozen=True)
class AbsorptionBudget:
    """
    T = 1 - one_photon + cpt_term + other_coherence.

    f1[l, i] is the one-photon term of ground l and excited i; f2[g, e] the
    CPT term of ground pair (F=3 row g, F=4 column e). other_coherence holds
    contributions of same-manifold ground coherences and excited-excited
    coherences.
    """
    alpha: float
    one_photon: float
    cpt_term: float
    other_coherence: float
    transmittance: float
    direct_absorption: float
    f1: np.ndarray
    f2: np.ndarray


def transmittance(rho, coupling: CouplingMatrix, alpha: float, detunings: np.ndarray,
                  decay: np.ndarray) -> AbsorptionBudget:
    """
    Split alpha/Gamma * sum Im(Omega_li rho_il) using the steady-state
    expression of each optical coherence rho_il.
    """
    matrix = _matrix(rho)
    Gamma = float(np.max(decay[N_GROUND:]))
    omega = coupling.omega                        # Omega_li, l ground, i excited
    ground = matrix[:N_GROUND, :N_GROUND]         # rho_ul
    excited = matrix[N_GROUND:, N_GROUND:]        # rho_iu
    delta_g, delta_x = detunings[:N_GROUND], detunings[N_GROUND:]
    decay_g, decay_x = decay[:N_GROUND], decay[N_GROUND:]

    direct = alpha / Gamma * float(np.sum(np.imag(omega * matrix[N_GROUND:, :N_GROUND].T)))

    # rho_il = (i/2) [sum_u Omega_iu rho_ul - sum_u rho_iu Omega_ul] / D_il
    denominator = 0.5 * (decay_x[None, :] + decay_g[:, None]) + 1j * (delta_x[None, :] - delta_g[:, None])
    prefactor = 0.5j / denominator                                  # [l, i]

    # ground path: Omega_li Omega_iu rho_ul, indexed [l, i, u]
    ground_terms = omega[:, :, None] * omega.conj().T[None, :, :] * ground.T[:, None, :]
    # excited path: Omega_li rho_iu Omega_ul, indexed [l, i, u]
    excited_terms = omega[:, :, None] * excited[None, :, :] * omega.conj()[:, None, :]

    scale = alpha / Gamma
    ground_contrib = scale * np.imag(prefactor[:, :, None] * ground_terms)
    excited_contrib = -scale * np.imag(prefactor[:, :, None] * excited_terms)

    l_index = np.arange(N_GROUND)
    i_index = np.arange(N_GROUND)
    f1 = ground_contrib[l_index, :, l_index] + excited_contrib[:, i_index, i_index]

    is_lower = np.arange(N_GROUND) < 7
    cross = is_lower[:, None] != is_lower[None, :]
    same = ~cross & ~np.eye(N_GROUND, dtype=bool)

    cross_lu = ground_contrib.sum(axis=1) * cross                  # [l, u]
    f2 = -(cross_lu[:7, 7:] + cross_lu[7:, :7].T)
    same_ground = float(np.sum(ground_contrib.sum(axis=1) * same))
    off_diagonal_excited = ~np.eye(N_GROUND, dtype=bool)
    excited_coherence = float(np.sum(excited_contrib * off_diagonal_excited[None, :, :]))
    other = -(same_ground + excited_coherence)

    one_photon = float(np.sum(f1))
    cpt_term = float(np.sum(f2))
    value = 1.0 - one_photon + cpt_term + other
    logger.debug(f"Absorption budget: F1 {one_photon:.6e}, F2 {cpt_term:.6e}, other {other:.3e}")
    return AbsorptionBudget(alpha, one_photon, cpt_term, other, value, direct, f1, f2)


def spectrum_baseline(values: np.ndarray, fraction: float = BASELINE_FRACTION) -> float:
    """Median of the outer `fraction` of samples, split evenly between both ends"""
    values = np.asarray(values, dtype=float)
    count = max(1, int(round(len(values) * fraction / 2)))
    return float(np.median(np.concatenate([values[:count], values[-count:]])))


def cpt_amplitude(detuning: np.ndarray, values: np.ndarray, center: Optional[float] = None,
                  baseline: Optional[float] = None) -> float:
    """
    |value at the resonance - baseline|.

    `center` selects the sample closest to a known resonance; without it the
    largest excursion from the baseline is used. A flat spectrum gives 0.
    """
    detuning = np.asarray(detuning, dtype=float)
    values = np.asarray(values, dtype=float)
    if baseline is None:
        baseline = spectrum_baseline(values)
    if center is None:
        return float(np.max(np.abs(values - baseline)))
    nearest = int(np.argmin(np.abs(detuning - center)))
    return float(abs(values[nearest] - baseline))
