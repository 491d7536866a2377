"""
Vectorized Liouvillian and steady-state solver

The density matrix is flattened row-major (numpy ravel), so element (l, m)
sits at position l*n + m and vec(A rho B) = (A kron B^T) vec(rho). All rates
are divided by the largest decay rate before assembly; LiouvillianMatrix
keeps that scale so physical rates can be recovered.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import norm as sparse_norm
from scipy.sparse.linalg import splu

from coupling import CouplingMatrix
from errors import IntegrationError, SolverError
from relaxation import (BranchingTable, RelaxationConfig, build_branching_table, decay_vector,
                        source_kernel)

logger = logging.getLogger(__name__)

# systems with at most this many unknowns are solved densely
DENSE_THRESHOLD = 256


@dataclass(frozen=True)
class SolverTolerances:
    trace: float = 1e-10
    hermiticity: float = 1e-12
    population: float = 1e-10
    residual: float = 1e-9

    def scaled(self, factor: float) -> "SolverTolerances":
        return SolverTolerances(self.trace * factor, self.hermiticity * factor,
                                self.population * factor, self.residual * factor)


@dataclass(frozen=True)
class DensityMatrix:
    rho: np.ndarray

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho))

    def trace_error(self) -> float:
        return float(abs(np.trace(self.rho) - 1))

    def hermiticity_error(self) -> float:
        """max |rho - rho^H| relative to max |rho|"""
        scale = np.max(np.abs(self.rho))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(self.rho - self.rho.conj().T)) / scale)

    def population_excursion(self) -> float:
        """How far the populations leave [0, 1]"""
        populations = self.populations()
        return float(max(0.0, -populations.min(), populations.max() - 1))

    def diagnostics(self) -> Dict[str, float]:
        return {
            "trace_error": self.trace_error(),
            "hermiticity_error": self.hermiticity_error(),
            "population_excursion": self.population_excursion(),
        }


@dataclass(frozen=True)
class LiouvillianMatrix:
    """Generator M/scale of d vec(rho)/dt = M vec(rho), with `scale` in rad/s"""
    matrix: sp.csr_matrix
    scale: float
    n: int

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Physical d rho/dt (rad/s units) for a density matrix"""
        return (self.matrix @ np.ravel(rho)).reshape(self.n, self.n) * self.scale


def population_positions(n: int) -> np.ndarray:
    return np.arange(n) * (n + 1)


def trace_row(n: int) -> sp.csr_matrix:
    row = np.zeros(n * n)
    row[population_positions(n)] = 1.0
    return sp.csr_matrix(row)


class LiouvillianAssembler:
    """
    Holds the detuning-independent part of the Liouvillian so a scan only
    adds the -i(delta_l - delta_m) diagonal per point.
    """

    def __init__(self, omega_full: np.ndarray, decay: np.ndarray, kernel: np.ndarray,
                 scale: Optional[float] = None):
        n = omega_full.shape[0]
        if omega_full.shape != (n, n) or decay.shape != (n,) or kernel.shape != (n, n):
            raise SolverError(f"Inconsistent dimensions: coupling {omega_full.shape}, "
                              f"decay {decay.shape}, source kernel {kernel.shape}")
        self.n = n
        self.scale = float(scale if scale is not None else np.max(decay))
        if self.scale <= 0:
            raise SolverError("Total decay is zero; the steady state is undefined")

        omega = sp.csr_matrix(omega_full / self.scale)
        identity = sp.identity(n, dtype=complex, format="csr")
        rate = decay / self.scale
        decay_diagonal = -0.5 * (rate[:, None] + rate[None, :]).ravel()

        rows, cols = np.nonzero(kernel)
        positions = population_positions(n)
        source = sp.csr_matrix((kernel[rows, cols] / self.scale, (positions[rows], positions[cols])),
                               shape=(n * n, n * n))

        self.static = (0.5j * (sp.kron(omega, identity) - sp.kron(identity, omega.T))
                       + sp.diags(decay_diagonal) + source).tocsr()

    def at(self, detunings: np.ndarray) -> LiouvillianMatrix:
        detunings = np.asarray(detunings, dtype=float)
        if detunings.shape != (self.n,):
            raise SolverError(f"Expected {self.n} detunings, got {detunings.shape}")
        scaled = detunings / self.scale
        diagonal = -1j * (scaled[:, None] - scaled[None, :]).ravel()
        return LiouvillianMatrix((self.static + sp.diags(diagonal)).tocsr(), self.scale, self.n)


def assembler_for(coupling: CouplingMatrix, relaxation: RelaxationConfig,
                  branching: Optional[BranchingTable] = None) -> LiouvillianAssembler:
    branching = branching or build_branching_table(include_within_manifold=relaxation.include_within_manifold)
    return LiouvillianAssembler(coupling.full(), decay_vector(relaxation),
                                source_kernel(relaxation, branching))


def assemble(detunings: np.ndarray, coupling: CouplingMatrix, relaxation: RelaxationConfig,
             branching: Optional[BranchingTable] = None) -> LiouvillianMatrix:
    """Liouvillian for one set of detunings, couplings and relaxation rates"""
    return assembler_for(coupling, relaxation, branching).at(detunings)


def _condition_estimate(matrix: sp.spmatrix) -> float:
    try:
        return float(np.linalg.cond(matrix.toarray(), 1))
    except np.linalg.LinAlgError:
        return float("inf")


def _constrained_system(M: LiouvillianMatrix) -> Tuple[sp.csc_matrix, np.ndarray]:
    # the rho_11 equation is redundant with the others and gives way to Tr(rho) = 1
    system = sp.vstack([trace_row(M.n), M.matrix[1:]]).tocsc()
    rhs = np.zeros(M.n * M.n, dtype=complex)
    rhs[0] = 1.0
    return system, rhs


def _solve_dense(system: sp.csc_matrix, rhs: np.ndarray) -> np.ndarray:
    dense = system.toarray()
    try:
        x = np.linalg.solve(dense, rhs)
        return x + np.linalg.solve(dense, rhs - dense @ x)
    except np.linalg.LinAlgError:
        raise SolverError("Liouvillian is singular", _condition_estimate(system))


def _solve_sparse(system: sp.csc_matrix, rhs: np.ndarray) -> np.ndarray:
    try:
        lu = splu(system)
    except RuntimeError as e:
        raise SolverError(f"Sparse factorization failed: {str(e)}", _condition_estimate(system))
    x = lu.solve(rhs)
    # one step of iterative refinement
    return x + lu.solve(rhs - system @ x)


def steady_state(M: LiouvillianMatrix, tolerances: Optional[SolverTolerances] = None) -> DensityMatrix:
    """
    Solve M rho = 0 with Tr(rho) = 1.

    Raises:
        SolverError: singular system, non-finite solution, residual above
            `tolerances.residual * ||M||` or trace error above `tolerances.trace`
    """
    tolerances = tolerances or SolverTolerances()
    system, rhs = _constrained_system(M)

    if system.shape[0] <= DENSE_THRESHOLD:
        x = _solve_dense(system, rhs)
    else:
        x = _solve_sparse(system, rhs)

    if not np.all(np.isfinite(x)):
        raise SolverError("Steady state contains non-finite values", _condition_estimate(system))

    residual = float(np.max(np.abs(M.matrix @ x)))
    bound = tolerances.residual * sparse_norm(M.matrix, np.inf)
    if residual > bound:
        raise SolverError(f"Steady-state residual {residual:.3e} exceeds {bound:.3e}",
                          _condition_estimate(system))

    state = DensityMatrix(x.reshape(M.n, M.n))
    if state.trace_error() > tolerances.trace:
        raise SolverError(f"Steady-state trace error {state.trace_error():.3e}")
    if state.hermiticity_error() > tolerances.hermiticity:
        logger.warning(f"Steady state deviates from Hermitian by {state.hermiticity_error():.3e}")
    if state.population_excursion() > tolerances.population:
        logger.warning(f"Steady-state populations leave [0, 1] by {state.population_excursion():.3e}")
    return state


def _integrate(rho0: np.ndarray, M: LiouvillianMatrix, duration: float, dt: Optional[float],
               t_eval: Optional[np.ndarray], rtol: float, atol: float):
    if duration <= 0:
        raise IntegrationError(f"Duration must be positive, got {duration}")
    generator = M.matrix.tocsc()
    y0 = np.asarray(rho0, dtype=complex).ravel()
    options = {}
    if dt is not None:
        options["first_step"] = dt * M.scale
    if t_eval is not None:
        options["t_eval"] = np.asarray(t_eval) * M.scale

    solution = solve_ivp(lambda t, y: generator @ y, (0.0, duration * M.scale), y0,
                         method="BDF", jac=generator, rtol=rtol, atol=atol, **options)
    if not solution.success:
        logger.error(f"Time integration failed: {solution.message}")
        raise IntegrationError(f"Time integration failed: {solution.message}")
    if not np.all(np.isfinite(solution.y)):
        raise IntegrationError("Time integration produced non-finite values")
    return solution


def time_evolve(rho0: np.ndarray, M: LiouvillianMatrix, duration: float, dt: Optional[float] = None,
                rtol: float = 1e-10, atol: float = 1e-13) -> DensityMatrix:
    """
    Propagate d rho/dt = M rho for `duration` seconds with an adaptive
    implicit (BDF) integrator; `dt` is only the first trial step.
    """
    solution = _integrate(rho0, M, duration, dt, None, rtol, atol)
    state = DensityMatrix(solution.y[:, -1].reshape(M.n, M.n))
    drift = state.trace_error() - DensityMatrix(np.asarray(rho0)).trace_error()
    if abs(drift) > 1e-6:
        raise IntegrationError(f"Trace drifted by {drift:.3e}; step size unstable")
    return state


def trajectory(rho0: np.ndarray, M: LiouvillianMatrix, times: np.ndarray,
               rtol: float = 1e-10, atol: float = 1e-13) -> np.ndarray:
    """Density matrices at `times` (seconds), shape (len(times), n, n)"""
    times = np.asarray(times, dtype=float)
    solution = _integrate(rho0, M, float(times[-1]), None, times, rtol, atol)
    return solution.y.T.reshape(len(times), M.n, M.n)
