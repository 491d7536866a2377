"""
Tests for the Liouvillian assembly, the steady-state solver and time evolution

Small two- and three-level systems are checked against closed-form steady
states; the 32-level generator is checked against the master equation
written out with dense matrices.
"""
import math

import numpy as np
import pytest

from atomic_model import N_GROUND, N_LEVELS, detuning_vector, tuned_delta_opt, zeeman_energies
from coupling import CouplingMatrix
from errors import IntegrationError, SolverError
from relaxation import build_branching_table, decay_vector, source_kernel
from solver import (DensityMatrix, LiouvillianAssembler, LiouvillianMatrix, SolverTolerances, assemble, assembler_for,
                    steady_state, time_evolve, trace_row, trajectory)

TWO_PI = 2 * math.pi
GAMMA = TWO_PI * 5e6


def two_level(rabi: float) -> LiouvillianAssembler:
    omega = np.array([[0.0, rabi], [rabi, 0.0]], dtype=complex)
    kernel = np.array([[0.0, GAMMA], [0.0, 0.0]])
    return LiouvillianAssembler(omega, np.array([0.0, GAMMA]), kernel)


def two_level_excited(rabi: float, delta: float) -> float:
    return (rabi ** 2 / 4) / (delta ** 2 + GAMMA ** 2 / 4 + rabi ** 2 / 2)


def lambda_system(a: complex, b: complex) -> LiouvillianAssembler:
    omega = np.zeros((3, 3), dtype=complex)
    omega[0, 2], omega[1, 2] = a, b
    omega[2, 0], omega[2, 1] = np.conj(a), np.conj(b)
    kernel = np.zeros((3, 3))
    kernel[0, 2] = kernel[1, 2] = GAMMA / 2
    return LiouvillianAssembler(omega, np.array([0.0, 0.0, GAMMA]), kernel)


def detunings_at(constants, delta_r: float = 0.0, B: float = 22.7e-6) -> np.ndarray:
    return detuning_vector(zeeman_energies(constants, B), delta_r, tuned_delta_opt(constants, 4))


@pytest.mark.parametrize("rabi, delta", [(0.1 * GAMMA, 0.0), (0.5 * GAMMA, 0.3 * GAMMA), (2.0 * GAMMA, -GAMMA)])
def test_two_level_steady_state(rabi, delta):
    state = steady_state(two_level(rabi).at(np.array([0.0, delta])))
    assert state.populations()[1] == pytest.approx(two_level_excited(rabi, delta), rel=1e-10)
    assert state.trace_error() < 1e-12


def test_three_level_dark_state():
    """At two-photon resonance without ground relaxation all population sits in the dark state"""
    a, b = GAMMA * (0.4 + 0.2j), GAMMA * (0.3 - 0.1j)
    state = steady_state(lambda_system(a, b).at(np.array([0.0, 0.0, 0.2 * GAMMA])))
    dark = np.array([np.conj(b), -np.conj(a), 0.0])
    dark /= np.linalg.norm(dark)
    assert np.allclose(state.rho, np.outer(dark, dark.conj()), atol=1e-9)
    assert state.populations()[2] == pytest.approx(0.0, abs=1e-12)


def test_no_light_gives_uniform_ground(constants, fast_relaxation):
    coupling = CouplingMatrix(np.zeros((N_GROUND, N_LEVELS - N_GROUND), dtype=complex))
    state = steady_state(assemble(detunings_at(constants), coupling, fast_relaxation))
    populations = state.populations()
    assert np.allclose(populations[:N_GROUND], 1 / 16, atol=1e-10)
    assert np.allclose(populations[N_GROUND:], 0.0, atol=1e-10)
    off_diagonal = state.rho - np.diag(np.diag(state.rho))
    assert np.max(np.abs(off_diagonal)) < 1e-12


def test_liouvillian_matches_dense_master_equation(constants, fast_relaxation, sigma_minus_coupling):
    detunings = detunings_at(constants, TWO_PI * 3e3)
    M = assemble(detunings, sigma_minus_coupling, fast_relaxation)

    rng = np.random.default_rng(7)
    raw = rng.normal(size=(N_LEVELS, N_LEVELS)) + 1j * rng.normal(size=(N_LEVELS, N_LEVELS))
    rho = raw @ raw.conj().T
    rho /= np.trace(rho)

    D = np.diag(detunings)
    omega = sigma_minus_coupling.full()
    decay = np.diag(decay_vector(fast_relaxation))
    kernel = source_kernel(fast_relaxation, build_branching_table(constants))
    expected = (-1j * (D @ rho - rho @ D) + 0.5j * (omega @ rho - rho @ omega)
                - 0.5 * (decay @ rho + rho @ decay) + np.diag(kernel @ np.real(np.diag(rho))))
    assert np.allclose(M.apply(rho), expected, rtol=1e-10, atol=1e-10 * np.max(np.abs(expected)))


def test_generator_preserves_trace(constants, fast_relaxation, sigma_minus_coupling):
    M = assemble(detunings_at(constants), sigma_minus_coupling, fast_relaxation)
    column_sums = np.asarray((trace_row(N_LEVELS) @ M.matrix).todense()).ravel()
    assert np.max(np.abs(column_sums)) < 1e-12


def test_driven_steady_state_invariants(constants, fast_relaxation, sigma_minus_coupling):
    state = steady_state(assemble(detunings_at(constants), sigma_minus_coupling, fast_relaxation))
    assert state.trace_error() < 1e-10
    assert state.hermiticity_error() < 1e-9
    assert state.population_excursion() < 1e-10
    assert set(state.diagnostics()) == {"trace_error", "hermiticity_error", "population_excursion"}


def test_singular_system_reports_condition():
    omega = np.zeros((3, 3), dtype=complex)
    kernel = np.zeros((3, 3))
    kernel[0, 2] = GAMMA
    assembler = LiouvillianAssembler(omega, np.array([0.0, 0.0, GAMMA]), kernel)
    with pytest.raises(SolverError) as excinfo:
        steady_state(assembler.at(np.zeros(3)))
    assert excinfo.value.condition_estimate is not None
    assert "condition estimate" in str(excinfo.value)


def test_zero_decay_rejected():
    with pytest.raises(SolverError, match="Total decay is zero"):
        LiouvillianAssembler(np.zeros((2, 2), dtype=complex), np.zeros(2), np.zeros((2, 2)))


def test_inconsistent_dimensions_rejected():
    with pytest.raises(SolverError):
        LiouvillianAssembler(np.zeros((2, 2), dtype=complex), np.ones(3), np.zeros((2, 2)))
    with pytest.raises(SolverError):
        two_level(GAMMA).at(np.zeros(3))


def test_scan_reuses_static_part():
    assembler = two_level(0.5 * GAMMA)
    first = assembler.at(np.array([0.0, 0.1 * GAMMA]))
    second = assembler.at(np.array([0.0, -0.1 * GAMMA]))
    assert first.scale == second.scale == GAMMA
    difference = (first.matrix - second.matrix).toarray()
    assert np.count_nonzero(difference - np.diag(np.diag(difference))) == 0


def test_time_evolution_converges_to_steady_state():
    rabi, delta = 0.5 * GAMMA, 0.2 * GAMMA
    M = two_level(rabi).at(np.array([0.0, delta]))
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    final = time_evolve(rho0, M, duration=60 / GAMMA)
    assert final.populations()[1] == pytest.approx(two_level_excited(rabi, delta), rel=1e-6)
    assert np.allclose(final.rho, steady_state(M).rho, atol=1e-8)


def test_trajectory_starts_at_initial_state():
    M = two_level(0.5 * GAMMA).at(np.zeros(2))
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    times = np.linspace(0.0, 10 / GAMMA, 5)
    states = trajectory(rho0, M, times)
    assert states.shape == (5, 2, 2)
    assert np.allclose(states[0], rho0)
    traces = np.real(np.trace(states, axis1=1, axis2=2))
    assert np.allclose(traces, 1.0, atol=1e-8)


def test_time_evolve_rejects_nonpositive_duration():
    M = two_level(GAMMA).at(np.zeros(2))
    with pytest.raises(IntegrationError):
        time_evolve(np.diag([1.0, 0.0]).astype(complex), M, duration=-1.0)


def test_density_matrix_diagnostics():
    state = DensityMatrix(np.array([[1.2, 0.1j], [0.0, -0.2]], dtype=complex))
    assert state.trace_error() == pytest.approx(0.0)
    assert state.population_excursion() == pytest.approx(0.2)
    assert state.hermiticity_error() == pytest.approx(0.1 / 1.2)


def test_tolerances_scale():
    scaled = SolverTolerances().scaled(10.0)
    assert scaled.trace == pytest.approx(1e-9)
    assert scaled.residual == pytest.approx(1e-8)


def test_assembler_for_uses_relaxation_rates(fast_relaxation, sigma_minus_coupling):
    assembler = assembler_for(sigma_minus_coupling, fast_relaxation)
    assert assembler.n == N_LEVELS
    assert assembler.scale == fast_relaxation.Gamma


def test_steady_state_ignores_overall_scale(constants, fast_relaxation, sigma_minus_coupling):
    M = assemble(detunings_at(constants, TWO_PI * 2e3), sigma_minus_coupling, fast_relaxation)
    rescaled = LiouvillianMatrix(M.matrix * 7.5, M.scale, M.n)
    assert np.allclose(steady_state(rescaled).rho, steady_state(M).rho, atol=1e-12)


def relaxing_lambda(a: float, b: float, gamma: float, Gamma: float) -> LiouvillianAssembler:
    """Lambda system whose ground levels exchange population at rate gamma"""
    omega = np.zeros((3, 3), dtype=complex)
    omega[0, 2], omega[1, 2] = a, b
    omega = omega + omega.conj().T
    kernel = np.array([[0.0, gamma, Gamma / 2], [gamma, 0.0, Gamma / 2], [0.0, 0.0, 0.0]])
    return LiouvillianAssembler(omega, np.array([gamma, gamma, Gamma]), kernel)


def test_relaxing_lambda_matches_nine_equations():
    a, b = 0.3 * GAMMA, 0.2 * GAMMA
    gamma, d = 0.01 * GAMMA, np.array([0.02 * GAMMA, -0.03 * GAMMA, 0.1 * GAMMA])
    g2 = (gamma + GAMMA) / 2

    def at(l, m):
        return 3 * l + m

    A = np.zeros((9, 9), dtype=complex)
    # rho_00 and rho_11
    for g, other, leg in ((0, 1, a), (1, 0, b)):
        A[at(g, g), at(g, g)] = -gamma
        A[at(g, g), at(other, other)] = gamma
        A[at(g, g), at(2, 2)] = GAMMA / 2
        A[at(g, g), at(2, g)] = 0.5j * leg
        A[at(g, g), at(g, 2)] = -0.5j * leg
    # rho_22
    A[at(2, 2), at(2, 2)] = -GAMMA
    A[at(2, 2), at(0, 2)] = 0.5j * a
    A[at(2, 2), at(1, 2)] = 0.5j * b
    A[at(2, 2), at(2, 0)] = -0.5j * a
    A[at(2, 2), at(2, 1)] = -0.5j * b
    # ground coherences
    A[at(0, 1), at(0, 1)] = -(gamma + 1j * (d[0] - d[1]))
    A[at(0, 1), at(2, 1)] = 0.5j * a
    A[at(0, 1), at(0, 2)] = -0.5j * b
    A[at(1, 0), at(1, 0)] = -(gamma + 1j * (d[1] - d[0]))
    A[at(1, 0), at(2, 0)] = 0.5j * b
    A[at(1, 0), at(1, 2)] = -0.5j * a
    # optical coherences
    A[at(0, 2), at(0, 2)] = -(g2 + 1j * (d[0] - d[2]))
    A[at(0, 2), at(2, 2)] = 0.5j * a
    A[at(0, 2), at(0, 0)] = -0.5j * a
    A[at(0, 2), at(0, 1)] = -0.5j * b
    A[at(1, 2), at(1, 2)] = -(g2 + 1j * (d[1] - d[2]))
    A[at(1, 2), at(2, 2)] = 0.5j * b
    A[at(1, 2), at(1, 0)] = -0.5j * a
    A[at(1, 2), at(1, 1)] = -0.5j * b
    A[at(2, 0), at(2, 0)] = -(g2 + 1j * (d[2] - d[0]))
    A[at(2, 0), at(0, 0)] = 0.5j * a
    A[at(2, 0), at(1, 0)] = 0.5j * b
    A[at(2, 0), at(2, 2)] = -0.5j * a
    A[at(2, 1), at(2, 1)] = -(g2 + 1j * (d[2] - d[1]))
    A[at(2, 1), at(0, 1)] = 0.5j * a
    A[at(2, 1), at(1, 1)] = 0.5j * b
    A[at(2, 1), at(2, 2)] = -0.5j * b

    A[at(0, 0)] = 0.0
    A[at(0, 0), [at(0, 0), at(1, 1), at(2, 2)]] = 1.0
    rhs = np.zeros(9, dtype=complex)
    rhs[at(0, 0)] = 1.0
    expected = np.linalg.solve(A, rhs).reshape(3, 3)

    state = steady_state(relaxing_lambda(a, b, gamma, GAMMA).at(d))
    assert np.allclose(state.rho, expected, atol=1e-10)


def test_time_evolution_at_vapor_cell_rates():
    """Lambda with a 107 Hz ground relaxation and a 0.51 GHz excited decay settles onto the steady state"""
    gamma, Gamma = TWO_PI * 107.0, TWO_PI * 0.51e9
    M = relaxing_lambda(TWO_PI * 1e6, TWO_PI * 1e6, gamma, Gamma).at(
        np.array([TWO_PI * 50.0, -TWO_PI * 50.0, 0.0]))
    rho0 = np.diag([0.5, 0.5, 0.0]).astype(complex)
    final = time_evolve(rho0, M, duration=30 / gamma, rtol=1e-8, atol=1e-11)
    assert np.allclose(final.rho, steady_state(M).rho, atol=1e-6)
