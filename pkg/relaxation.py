"""
Relaxation model: decay rates, excited-to-ground branching and the
ground-state repopulation (uniform, magnetic-dipole and their mixture).
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from atomic_model import (AtomicConstants, LEVELS, N_GROUND, N_LEVELS, clebsch_gordan,
                          load_constants)
from errors import ConfigError, SolverError

logger = logging.getLogger(__name__)

SINKHORN_TOLERANCE = 1e-14
SINKHORN_MAX_ITERATIONS = 20000


@dataclass(frozen=True)
class RelaxationConfig:
    """
    Rates are angular frequencies (rad/s); r is the uniform share of the
    ground-state relaxation.
    """
    gamma_p: float
    Gamma: float
    r: float
    include_within_manifold: bool = True

    def __post_init__(self):
        if not np.isfinite(self.gamma_p) or self.gamma_p < 0:
            raise ConfigError(f"gamma_p must be >= 0, got {self.gamma_p}", key="gamma_p")
        if not np.isfinite(self.Gamma) or self.Gamma <= 0:
            raise ConfigError(f"Gamma must be > 0, got {self.Gamma}", key="Gamma")
        if not 0.0 <= self.r <= 1.0:
            raise ConfigError(f"r must lie in [0, 1], got {self.r}", key="r")

    @property
    def gamma_uniform(self) -> float:
        return self.r * self.gamma_p

    @property
    def gamma_m1(self) -> float:
        return (1 - self.r) * self.gamma_p


@dataclass(frozen=True)
class BranchingTable:
    """
    t:  16x16 normalized optical dipole matrix, rows excited n, columns ground l
    w:  16x16 branching weights |t|^(2/3), row-normalized
    m1: 16x16 ground-to-ground distribution, m1[m, l] from source m into l
    """
    t: np.ndarray
    w: np.ndarray
    m1: np.ndarray
    include_within_manifold: bool


def optical_dipole_matrix(constants: AtomicConstants) -> np.ndarray:
    """d_FF' * CG between every excited n (rows) and ground l (columns), normalized per row"""
    t = np.zeros((N_LEVELS - N_GROUND, N_GROUND))
    for excited in LEVELS[N_GROUND:]:
        for ground in LEVELS[:N_GROUND]:
            q = excited.m_F - ground.m_F
            if abs(q) > 1:
                continue
            cg = clebsch_gordan(excited.F, excited.m_F, ground.F, ground.m_F, q)
            t[excited.index - 1 - N_GROUND, ground.index - 1] = constants.dipole(ground.F, excited.F) * cg
    return t / np.sqrt(np.sum(t ** 2, axis=1, keepdims=True))


def magnetic_dipole_weights(include_within_manifold: bool = True) -> np.ndarray:
    """
    Squared CG weights of |Delta m| <= 1 ground-to-ground transfers, summed
    over q, with a zero diagonal. Entry [m, l] is the source m -> target l.
    """
    weights = np.zeros((N_GROUND, N_GROUND))
    for source in LEVELS[:N_GROUND]:
        for target in LEVELS[:N_GROUND]:
            if source.index == target.index:
                continue
            if source.F == target.F and not include_within_manifold:
                continue
            q = target.m_F - source.m_F
            if abs(q) > 1:
                continue
            weights[source.index - 1, target.index - 1] = clebsch_gordan(
                target.F, target.m_F, source.F, source.m_F, q) ** 2
    return weights


def _sinkhorn_symmetric(matrix: np.ndarray) -> np.ndarray:
    """Scale a symmetric non-negative matrix to D A D with unit row and column sums"""
    d = np.ones(matrix.shape[0])
    for _ in range(SINKHORN_MAX_ITERATIONS):
        row_sums = d * (matrix @ d)
        if np.max(np.abs(row_sums - 1)) < SINKHORN_TOLERANCE:
            break
        d = np.sqrt(d / (matrix @ d))
    else:
        logger.warning(f"Symmetric balancing stopped after {SINKHORN_MAX_ITERATIONS} iterations, "
                       f"row-sum error {np.max(np.abs(row_sums - 1)):.2e}")
    balanced = d[:, None] * matrix * d[None, :]
    return balanced / balanced.sum(axis=1, keepdims=True)


def m1_distribution(include_within_manifold: bool = True) -> np.ndarray:
    """
    Ground-state M1 redistribution matrix with zero diagonal and unit row sums.

    With within-manifold transfers the symmetrized CG^2 weights are balanced
    to a doubly stochastic matrix, so equal populations stay equal. Without
    them the 7 + 9 bipartite structure admits no such balance and rows are
    only normalized.
    """
    weights = magnetic_dipole_weights(include_within_manifold)
    if not include_within_manifold:
        logger.warning("M1 relaxation restricted to F=3 <-> F=4 transfers: "
                       "the no-light ground populations will not be uniform")
        return weights / weights.sum(axis=1, keepdims=True)
    return _sinkhorn_symmetric(0.5 * (weights + weights.T))


@lru_cache(maxsize=None)
def build_branching_table(constants: Optional[AtomicConstants] = None,
                          include_within_manifold: bool = True) -> BranchingTable:
    constants = constants or load_constants()
    t = optical_dipole_matrix(constants)
    magnitude = np.abs(t) ** (2.0 / 3.0)
    w = magnitude / magnitude.sum(axis=1, keepdims=True)
    m1 = m1_distribution(include_within_manifold)
    for array in (t, w, m1):
        array.setflags(write=False)
    return BranchingTable(t, w, m1, include_within_manifold)


def decay_vector(config: RelaxationConfig) -> np.ndarray:
    """Gamma_l for all 32 sublevels: gamma_p on ground, Gamma on excited"""
    rates = np.empty(N_LEVELS)
    rates[:N_GROUND] = config.gamma_p
    rates[N_GROUND:] = config.Gamma
    return rates


def excited_branching(branching: Optional[BranchingTable] = None) -> np.ndarray:
    """Row n: probability that excited sublevel 17+n decays into each ground sublevel"""
    branching = branching or build_branching_table()
    return branching.w


def source_kernel(config: RelaxationConfig, branching: BranchingTable) -> np.ndarray:
    """
    32x32 matrix K with Lambda = K @ diag(rho): K[l, m] is the rate at which
    population of m feeds sublevel l. Excited rows are zero.
    """
    kernel = np.zeros((N_LEVELS, N_LEVELS))
    mixing = config.r / 15 + branching.m1 * (1 - config.r)
    np.fill_diagonal(mixing, 0.0)
    kernel[:N_GROUND, :N_GROUND] = mixing.T * config.gamma_p
    kernel[:N_GROUND, N_GROUND:] = branching.w.T * config.Gamma
    return kernel


def source_matrix(rho: np.ndarray, config: RelaxationConfig,
                  branching: Optional[BranchingTable] = None) -> np.ndarray:
    """Influx rates Lambda_l (32 entries, excited ones zero) for density matrix `rho`"""
    branching = branching or build_branching_table(include_within_manifold=config.include_within_manifold)
    rho = np.asarray(rho)
    if rho.shape != (N_LEVELS, N_LEVELS):
        raise SolverError(f"Density matrix must be 32x32, got {rho.shape}")
    populations = np.real(np.diag(rho))
    return source_kernel(config, branching) @ populations
