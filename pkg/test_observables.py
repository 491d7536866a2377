"""
Tests for excited population, transmittance and resonance amplitudes
"""
import math

import numpy as np
import pytest

from atomic_model import N_GROUND, detuning_vector, tuned_delta_opt, zeeman_energies
from coupling import FieldAmplitudes, PolarizationScheme, build_bichromatic_coupling
from lineshape import LambdaSystem, width
from observables import (absorbed_fraction, cpt_amplitude, excited_population, excited_population_via_coupling,
                         spectrum_baseline, transmittance)
from relaxation import decay_vector
from solver import assemble, steady_state

TWO_PI = 2 * math.pi


@pytest.fixture
def driven(constants, fast_relaxation, sigma_minus_coupling):
    detunings = detuning_vector(zeeman_energies(constants, 22.7e-6), TWO_PI * 2e3, tuned_delta_opt(constants, 4))
    state = steady_state(assemble(detunings, sigma_minus_coupling, fast_relaxation))
    return state, detunings


def test_excited_population_forms_agree(driven, sigma_minus_coupling, fast_relaxation):
    state, _ = driven
    direct = excited_population(state)
    assert direct > 0
    assert excited_population_via_coupling(state, sigma_minus_coupling, fast_relaxation.Gamma) == pytest.approx(
        direct, rel=1e-8)


def test_excited_population_accepts_plain_arrays(driven):
    state, _ = driven
    assert excited_population(state.rho) == excited_population(state)


def test_transmittance_matches_absorbed_fraction(driven, sigma_minus_coupling, fast_relaxation):
    state, detunings = driven
    alpha = 0.8
    budget = transmittance(state, sigma_minus_coupling, alpha, detunings, decay_vector(fast_relaxation))
    absorbed = absorbed_fraction(state, alpha)
    assert absorbed == pytest.approx(alpha * excited_population(state))
    assert 1 - budget.transmittance == pytest.approx(absorbed, rel=1e-6)
    assert budget.direct_absorption == pytest.approx(absorbed, rel=1e-8)
    assert budget.transmittance == pytest.approx(
        1 - budget.one_photon + budget.cpt_term + budget.other_coherence)
    assert budget.f1.shape == (N_GROUND, N_GROUND)
    assert budget.f2.shape == (7, 9)
    assert budget.one_photon == pytest.approx(float(np.sum(budget.f1)))
    assert budget.cpt_term == pytest.approx(float(np.sum(budget.f2)))


def test_baseline_uses_both_ends():
    values = np.arange(100.0)
    assert spectrum_baseline(values) == pytest.approx(49.5)
    assert spectrum_baseline(np.full(7, 2.0)) == 2.0


def test_cpt_amplitude():
    detuning = np.linspace(-10.0, 10.0, 201)
    values = 1.0 - 0.3 / (1 + detuning ** 2)
    far = 1.0 - 0.3 / (1 + 100.0)
    assert cpt_amplitude(detuning, values) == pytest.approx(0.3 - (1.0 - far), rel=1e-2)
    assert cpt_amplitude(detuning, values, center=0.0, baseline=1.0) == pytest.approx(0.3)
    assert cpt_amplitude(detuning, np.ones_like(detuning)) == 0.0


def test_cpt_amplitude_ignores_baseline_level():
    detuning = np.linspace(-10.0, 10.0, 201)
    values = 1.0 - 0.3 / (1 + detuning ** 2)
    reference = cpt_amplitude(detuning, values)
    for shift in (-0.7, 0.25, 40.0):
        assert cpt_amplitude(detuning, values + shift) == pytest.approx(reference, rel=1e-9)
        assert cpt_amplitude(detuning, values + shift, center=0.0) == pytest.approx(
            cpt_amplitude(detuning, values, center=0.0), rel=1e-9)


def budget_at(delta_r, intensity, constants, relaxation):
    coupling = build_bichromatic_coupling(PolarizationScheme.sigma_minus(),
                                          FieldAmplitudes.from_intensities(intensity, intensity), constants)
    detunings = detuning_vector(zeeman_energies(constants, 22.7e-6), delta_r, tuned_delta_opt(constants, 4))
    decay = decay_vector(relaxation)
    state = steady_state(assemble(detunings, coupling, relaxation))
    return transmittance(state, coupling, 1.0, detunings, decay), coupling, detunings, decay


@pytest.mark.parametrize("intensity", [0.05, 5.0])
@pytest.mark.parametrize("delta_r_hz", [0.0, 2e3, -150e3])
def test_absorbed_fraction_is_bounded(constants, fast_relaxation, intensity, delta_r_hz):
    budget, *_ = budget_at(TWO_PI * delta_r_hz, intensity, constants, fast_relaxation)
    assert 0.0 <= 1.0 - budget.transmittance <= 1.0


def test_cpt_term_vanishes_far_from_raman_resonance(constants, fast_relaxation):
    _, coupling, detunings, decay = budget_at(0.0, 0.05, constants, fast_relaxation)
    system = LambdaSystem.build(0, 0, coupling, fast_relaxation.Gamma)
    far = 1000 * width(system, coupling, detunings, decay)
    on_resonance, *_ = budget_at(0.0, 0.05, constants, fast_relaxation)
    off_resonance, *_ = budget_at(far, 0.05, constants, fast_relaxation)
    assert abs(on_resonance.cpt_term) > abs(off_resonance.cpt_term)
    assert abs(off_resonance.cpt_term) < 0.01 * abs(off_resonance.one_photon)
