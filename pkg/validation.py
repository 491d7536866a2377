"""
Oracle and invariant checks run by the `validate` command.

Each check measures a residual against an independent reference (sympy
angular momentum, hand-solved small systems, the master equation written
out with dense matrix products, time integration) and compares it with a
bound that the tolerance scale multiplies.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from sympy.physics.wigner import clebsch_gordan as sympy_clebsch_gordan

from atomic_model import (N_GROUND, N_LEVELS, clebsch_gordan, detuning_vector, ground_index,
                          load_constants, raman_resonance, tuned_delta_opt, zeeman_energies)
from coupling import FieldAmplitudes, PolarizationScheme, build_bichromatic_coupling
from lineshape import (DarkStateClass, LambdaSystem, dark_state_condition, double_lambda_legs,
                       light_shift, peak_center_quadratic, suppression_check, width as lineshape_width,
                       width_to_fwhm)
from observables import excited_population, excited_population_via_coupling
from relaxation import (RelaxationConfig, build_branching_table, decay_vector, source_kernel,
                        source_matrix)
from scan import SpectrumScan
from solver import (LiouvillianAssembler, SolverTolerances, assembler_for, steady_state, time_evolve,
                    trace_row)

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi

# well-conditioned rates for the randomized oracles
ORACLE_RELAXATION = RelaxationConfig(gamma_p=TWO_PI * 20e3, Gamma=TWO_PI * 5e6, r=0.6)
ORACLE_INTENSITY_RANGE = (0.01, 0.1)
TIME_EVOLUTION_RELAXATION = RelaxationConfig(gamma_p=TWO_PI * 100e3, Gamma=TWO_PI * 5e6, r=0.6)


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    bound: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: List[CheckResult]
    seed: int
    tolerance_scale: float

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def to_document(self) -> Dict:
        return {
            "passed": self.passed,
            "seed": self.seed,
            "tolerance_scale": self.tolerance_scale,
            "checks": [asdict(check) for check in self.checks],
        }


def _random_density_matrix(rng: np.random.Generator, n: int = N_LEVELS) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def _random_case(rng: np.random.Generator):
    """Coupling, relaxation and detunings of a random well-conditioned configuration"""
    constants = load_constants()
    schemes = (PolarizationScheme.sigma_plus(), PolarizationScheme.sigma_minus(),
               PolarizationScheme.lin_lin(rng.uniform(0, math.pi)))
    scheme = schemes[rng.integers(len(schemes))]
    low, high = ORACLE_INTENSITY_RANGE
    fields = FieldAmplitudes.from_intensities(rng.uniform(low, high), rng.uniform(low, high))
    coupling = build_bichromatic_coupling(scheme, fields, constants)
    energies = zeeman_energies(constants, rng.uniform(0, 50e-6))
    delta_opt = tuned_delta_opt(constants, int(rng.choice([3, 4])), TWO_PI * rng.uniform(-2e6, 2e6))
    detunings = detuning_vector(energies, TWO_PI * rng.uniform(-50e3, 50e3), delta_opt)
    return coupling, ORACLE_RELAXATION, detunings


# -- individual checks ------------------------------------------------------

def check_cg_table(scale: float, rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for F_prime in (3, 4):
        for F in (3, 4):
            for m_F in range(-F, F + 1):
                for q in (-1, 0, 1):
                    m_prime = m_F + q
                    if abs(m_prime) > F_prime:
                        continue
                    reference = float(sympy_clebsch_gordan(F, 1, F_prime, m_F, q, m_prime))
                    worst = max(worst, abs(clebsch_gordan(F_prime, m_prime, F, m_F, q) - reference))
    bound = 1e-12 * scale
    return CheckResult("cg_table", worst <= bound, worst, bound, "cached CG table vs sympy")


def check_branching(scale: float, rng: np.random.Generator) -> CheckResult:
    branching = build_branching_table(load_constants(), True)
    residuals = [
        np.abs(np.sum(branching.t ** 2, axis=1) - 1),
        np.abs(np.sum(branching.w, axis=1) - 1),
        np.abs(np.sum(branching.m1, axis=1) - 1),
        np.abs(np.sum(branching.m1, axis=0) - 1),
        np.abs(np.diag(branching.m1)),
    ]
    worst = float(max(np.max(r) for r in residuals))
    bound = 1e-12 * scale
    return CheckResult("branching_normalization", worst <= bound, worst, bound,
                       "row sums of T^2 and W, row/column sums of the M1 matrix")


def check_flux_balance(scale: float, rng: np.random.Generator) -> CheckResult:
    relaxation = ORACLE_RELAXATION
    rho = _random_density_matrix(rng)
    influx = source_matrix(rho, relaxation)
    outflux = np.sum(decay_vector(relaxation) * np.real(np.diag(rho)))
    residual = abs(np.sum(influx) - outflux) / outflux
    bound = 1e-12 * scale
    return CheckResult("flux_balance", residual <= bound, float(residual), bound,
                       "total repopulation equals total decay")


def check_trace_row(scale: float, rng: np.random.Generator) -> CheckResult:
    coupling, relaxation, detunings = _random_case(rng)
    M = assembler_for(coupling, relaxation).at(detunings)
    rho = _random_density_matrix(rng).ravel()
    rate = M.matrix @ rho
    residual = abs((trace_row(M.n) @ rate)[0]) / np.max(np.abs(rate))
    bound = 1e-10 * scale
    return CheckResult("trace_preservation", residual <= bound, float(residual), bound,
                       "d Tr(rho)/dt = 0 for a random density matrix")


def _master_equation(rho, omega_full, detunings, decay, kernel):
    """d rho/dt written out with dense matrix products (rad/s)"""
    detuning = np.diag(detunings)
    gamma = np.diag(decay)
    drho = (-1j * (detuning @ rho - rho @ detuning)
            + 0.5j * (omega_full @ rho - rho @ omega_full)
            - 0.5 * (gamma @ rho + rho @ gamma))
    return drho + np.diag(kernel @ np.real(np.diag(rho)))


def check_liouvillian(scale: float, rng: np.random.Generator) -> CheckResult:
    coupling, relaxation, detunings = _random_case(rng)
    branching = build_branching_table(load_constants(), relaxation.include_within_manifold)
    decay = decay_vector(relaxation)
    kernel = source_kernel(relaxation, branching)
    M = LiouvillianAssembler(coupling.full(), decay, kernel).at(detunings)
    rho = _random_density_matrix(rng)
    expected = _master_equation(rho, coupling.full(), detunings, decay, kernel)
    residual = np.max(np.abs(M.apply(rho) - expected)) / np.max(np.abs(expected))
    bound = 1e-12 * scale
    return CheckResult("liouvillian_elementwise", residual <= bound, float(residual), bound,
                       "vectorized generator vs dense master equation")


def check_no_light(scale: float, rng: np.random.Generator) -> CheckResult:
    constants = load_constants()
    coupling = build_bichromatic_coupling(PolarizationScheme.sigma_minus(), FieldAmplitudes(0.0, 0.0), constants)
    detunings = detuning_vector(zeeman_energies(constants, 22.7e-6), 0.0, tuned_delta_opt(constants, 4))
    state = steady_state(assembler_for(coupling, ORACLE_RELAXATION).at(detunings))
    populations = state.populations()
    residual = max(np.max(np.abs(populations[:N_GROUND] - 1 / 16)), np.max(np.abs(populations[N_GROUND:])))
    bound = 1e-10 * scale
    return CheckResult("no_light_uniform", residual <= bound, float(residual), bound,
                       "ground populations 1/16 and empty excited state without light")


def check_steady_state_invariants(scale: float, rng: np.random.Generator) -> CheckResult:
    coupling, relaxation, detunings = _random_case(rng)
    tolerances = SolverTolerances().scaled(scale)
    state = steady_state(assembler_for(coupling, relaxation).at(detunings), tolerances)
    trace_ratio = state.trace_error() / tolerances.trace
    hermiticity_ratio = state.hermiticity_error() / tolerances.hermiticity
    passed = trace_ratio <= 1 and hermiticity_ratio <= 1
    return CheckResult("steady_state_invariants", passed, float(max(trace_ratio, hermiticity_ratio)), 1.0,
                       f"trace error {state.trace_error():.2e}, hermiticity {state.hermiticity_error():.2e} "
                       "(residual is the larger ratio to its bound)")


def check_excited_population_forms(scale: float, rng: np.random.Generator) -> CheckResult:
    coupling, relaxation, detunings = _random_case(rng)
    state = steady_state(assembler_for(coupling, relaxation).at(detunings))
    direct = excited_population(state)
    via_coupling = excited_population_via_coupling(state, coupling, relaxation.Gamma)
    residual = abs(direct - via_coupling) / max(abs(direct), 1e-300)
    bound = 1e-9 * scale
    return CheckResult("excited_population_forms", residual <= bound, float(residual), bound,
                       "trace of excited block vs optical-coherence form")


def _time_evolution_case(rng: np.random.Generator):
    """
    Zero-field configuration driving one F' manifold; with these rates
    30/gamma_p leaves a residual below 1e-6
    """
    constants = load_constants()
    scheme = (PolarizationScheme.sigma_minus(), PolarizationScheme.lin_lin(0.0))[rng.integers(2)]
    low, high = ORACLE_INTENSITY_RANGE
    fields = FieldAmplitudes.from_intensities(rng.uniform(low, high), rng.uniform(low, high))
    tuned = int(rng.choice([3, 4]))
    coupling = build_bichromatic_coupling(scheme, fields, constants).without_excited(7 - tuned)
    delta_opt = tuned_delta_opt(constants, tuned, TWO_PI * rng.uniform(-1e6, 1e6))
    detunings = detuning_vector(zeeman_energies(constants, 0.0), TWO_PI * rng.uniform(-20e3, 20e3), delta_opt)
    return coupling, TIME_EVOLUTION_RELAXATION, detunings


def check_time_evolution(scale: float, rng: np.random.Generator, cases: int = 2) -> CheckResult:
    worst = 0.0
    for _ in range(cases):
        coupling, relaxation, detunings = _time_evolution_case(rng)
        M = assembler_for(coupling, relaxation).at(detunings)
        target = steady_state(M)
        rho0 = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
        rho0[np.arange(N_GROUND), np.arange(N_GROUND)] = 1 / N_GROUND
        evolved = time_evolve(rho0, M, 30.0 / relaxation.gamma_p, rtol=1e-8, atol=1e-11)
        worst = max(worst, float(np.max(np.abs(evolved.rho - target.rho))))
    bound = 1e-6 * scale
    return CheckResult("steady_vs_time_evolution", worst <= bound, worst, bound,
                       f"{cases} random configurations integrated from the uniform ground state")


def check_three_level(scale: float, rng: np.random.Generator) -> CheckResult:
    """
    Lambda system without ground relaxation at two-photon resonance: the
    steady state is the pure dark state (conj(b), -conj(a)) / N.
    """
    Gamma = TWO_PI * 5e6
    a = TWO_PI * 1e6 * complex(rng.uniform(0.2, 1), rng.uniform(-1, 1))
    b = TWO_PI * 1e6 * complex(rng.uniform(0.2, 1), rng.uniform(-1, 1))
    omega = np.zeros((3, 3), dtype=complex)
    omega[0, 2], omega[1, 2] = a, b
    omega = omega + omega.conj().T
    decay = np.array([0.0, 0.0, Gamma])
    kernel = np.zeros((3, 3))
    kernel[0, 2] = kernel[1, 2] = Gamma / 2
    detuning = TWO_PI * rng.uniform(-1e5, 1e5)
    state = steady_state(LiouvillianAssembler(omega, decay, kernel).at(
        np.array([detuning, detuning, TWO_PI * rng.uniform(-1e6, 1e6)])))

    dark = np.array([np.conj(b), -np.conj(a), 0.0])
    dark = dark / np.linalg.norm(dark)
    expected = np.outer(dark, dark.conj())
    residual = float(np.max(np.abs(state.rho - expected)))
    bound = 1e-10 * scale
    return CheckResult("three_level_dark_state", residual <= bound, residual, bound,
                       "closed Lambda system relaxes into its dark state")


def check_suppression(scale: float, rng: np.random.Generator) -> CheckResult:
    coupling = build_bichromatic_coupling(PolarizationScheme.lin_lin(0.0), FieldAmplitudes(1.0, 1.0))
    values = {m: suppression_check(ground_index(3, m), ground_index(4, m), coupling, 3) for m in range(-3, 4)}
    stretched = values[3]
    expected = {0: 0.0, 1: 5 / 21, 2: 16 / 21, 3: 1.0}
    residual = max(abs(values[m] / stretched - expected[abs(m)]) for m in values)
    bound = 1e-9 * scale
    return CheckResult("lin_lin_suppression", residual <= bound, float(residual), bound,
                       "|sum Omega Omega*|^2 of (m,m) via F'=3 relative to m=3: 0, 5/21, 16/21, 1")


def check_dark_state_classes(scale: float, rng: np.random.Generator) -> CheckResult:
    legs = double_lambda_legs(0, FieldAmplitudes(1.0, 1.0))
    parallel = dark_state_condition(0.0, legs)
    orthogonal = dark_state_condition(math.pi / 2, legs)
    passed = parallel is DarkStateClass.MUTUALLY_BRIGHT and orthogonal is DarkStateClass.COMMON_DARK
    return CheckResult("dark_state_m0", passed, 0.0 if passed else 1.0, 0.0,
                       f"theta=0: {parallel.value}, theta=pi/2: {orthogonal.value}")


def _weak_lin_lin_spectrum(scale: float, span: float, points: int):
    """Excited population around the isolated (-1,1) Lin||Lin resonance at 285 uT and 0.5 uW/mm^2"""
    constants = load_constants()
    relaxation = RelaxationConfig(gamma_p=TWO_PI * 107.0, Gamma=TWO_PI * 0.51e9, r=0.6)
    coupling = build_bichromatic_coupling(PolarizationScheme.lin_lin(0.0), FieldAmplitudes.from_intensities(0.5, 0.5),
                                          constants)
    energies = zeeman_energies(constants, 285e-6)
    delta_opt = tuned_delta_opt(constants, 3)
    center = raman_resonance(energies, -1, 1)
    system = LambdaSystem.build(-1, 1, coupling, relaxation.Gamma)
    detunings = detuning_vector(energies, center, delta_opt)
    half_width = lineshape_width(system, coupling, detunings, decay_vector(relaxation))
    analytic = center + light_shift(system, coupling, detunings)

    assembler = assembler_for(coupling, relaxation)
    tolerances = SolverTolerances().scaled(max(scale, 1.0) * 1e3)
    grid = analytic + np.linspace(-span, span, points) * half_width
    values = np.array([excited_population(steady_state(assembler.at(detuning_vector(energies, d, delta_opt)),
                                                       tolerances))
                       for d in grid])
    return grid, values, analytic, half_width


def check_lineshape_center(scale: float, rng: np.random.Generator, points: int = 61) -> CheckResult:
    """
    Isolated (-1,1) Lin||Lin resonance at low intensity: the numeric dip
    centre sits within a tenth of the analytic half width of the analytic
    centre.
    """
    grid, values, analytic, half_width = _weak_lin_lin_spectrum(scale, 4.0, points)
    index = int(np.argmin(values))
    numeric = peak_center_quadratic(grid, -values, index)
    residual = abs(numeric - analytic) / half_width
    bound = 0.1 * scale
    return CheckResult("lineshape_center", residual <= bound, float(residual), bound,
                       f"numeric {numeric / TWO_PI:.2f} Hz vs analytic {analytic / TWO_PI:.2f} Hz "
                       "(residual in units of the analytic half width)")


def check_lineshape_width(scale: float, rng: np.random.Generator, points: int = 81) -> CheckResult:
    """Same resonance: the measured FWHM is within 15% of twice the analytic half width"""
    grid, values, analytic, half_width = _weak_lin_lin_spectrum(scale, 10.0, points)
    spectrum = SpectrumScan.from_arrays(grid, values)
    bound = 0.15 * scale
    if not spectrum.peaks:
        return CheckResult("lineshape_width", False, float("inf"), bound, "no resonance found")
    peak = min(spectrum.peaks, key=lambda p: abs(p.center - analytic))
    expected = width_to_fwhm(half_width)
    if peak.fwhm is None:
        return CheckResult("lineshape_width", False, float("inf"), bound, "resonance not isolated")
    residual = abs(peak.fwhm / expected - 1.0)
    return CheckResult("lineshape_width", residual <= bound, float(residual), bound,
                       f"numeric FWHM {peak.fwhm / TWO_PI:.2f} Hz vs analytic {expected / TWO_PI:.2f} Hz")


CHECKS: Tuple[Callable[[float, np.random.Generator], CheckResult], ...] = (
    check_cg_table,
    check_branching,
    check_flux_balance,
    check_trace_row,
    check_liouvillian,
    check_no_light,
    check_steady_state_invariants,
    check_excited_population_forms,
    check_three_level,
    check_suppression,
    check_dark_state_classes,
    check_time_evolution,
    check_lineshape_center,
    check_lineshape_width,
)


def run_validation(tolerance_scale: float = 1.0, seed: int = 0,
                   checks: Optional[Tuple[Callable, ...]] = None) -> ValidationReport:
    """Run every check; a check that raises is reported as failed with its error"""
    rng = np.random.default_rng(seed)
    results = []
    for check in checks or CHECKS:
        name = check.__name__.replace("check_", "")
        try:
            result = check(tolerance_scale, rng)
        except Exception as e:
            logger.error(f"Check {name} raised: {str(e)}")
            result = CheckResult(name, False, float("inf"), 0.0, f"{type(e).__name__}: {e}")
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"{result.name}: {'pass' if result.passed else 'FAIL'} "
                          f"(residual {result.residual:.3e}, bound {result.bound:.3e})")
        results.append(result)
    report = ValidationReport(results, seed, tolerance_scale)
    logger.info(f"Validation {'passed' if report.passed else 'failed'}: "
                f"{len(results) - len(report.failures())}/{len(results)} checks")
    return report
