"""
Tests for decay rates, optical branching and ground-state redistribution
"""
import math

import numpy as np
import pytest
from sympy.physics.wigner import clebsch_gordan as sympy_cg

from atomic_model import LEVELS, N_GROUND, N_LEVELS, ground_index, index_of
from errors import ConfigError, SolverError
from relaxation import (RelaxationConfig, build_branching_table, decay_vector, m1_distribution,
                        magnetic_dipole_weights, source_kernel, source_matrix)

TWO_PI = 2 * math.pi


@pytest.mark.parametrize("kwargs", [
    {"gamma_p": -1.0, "Gamma": 1.0, "r": 0.5},
    {"gamma_p": 1.0, "Gamma": 0.0, "r": 0.5},
    {"gamma_p": 1.0, "Gamma": 1.0, "r": 1.5},
    {"gamma_p": 1.0, "Gamma": 1.0, "r": -0.1},
    {"gamma_p": float("nan"), "Gamma": 1.0, "r": 0.5},
])
def test_invalid_relaxation_rejected(kwargs):
    with pytest.raises(ConfigError):
        RelaxationConfig(**kwargs)


def test_uniform_and_m1_shares(fast_relaxation):
    assert fast_relaxation.gamma_uniform == pytest.approx(0.6 * fast_relaxation.gamma_p)
    assert fast_relaxation.gamma_m1 == pytest.approx(0.4 * fast_relaxation.gamma_p)


def test_decay_vector(fast_relaxation):
    rates = decay_vector(fast_relaxation)
    assert rates.shape == (N_LEVELS,)
    assert np.all(rates[:N_GROUND] == fast_relaxation.gamma_p)
    assert np.all(rates[N_GROUND:] == fast_relaxation.Gamma)


def test_branching_rows_sum_to_one(constants):
    table = build_branching_table(constants)
    assert np.allclose(table.w.sum(axis=1), 1.0, atol=1e-14)
    assert np.allclose(np.sum(table.t ** 2, axis=1), 1.0, atol=1e-14)
    assert np.all(table.w >= 0)


def test_branching_matches_sympy(constants):
    """Stretched |F'=4, m'=4> decays with weights |d CG|^(2/3)"""
    table = build_branching_table(constants)
    row = index_of("excited", 4, 4) - 1 - N_GROUND
    raw = {}
    for F, m_F in ((3, 3), (4, 3), (4, 4)):
        cg = float(sympy_cg(F, 1, 4, m_F, 4 - m_F, 4))
        raw[(F, m_F)] = abs(constants.dipole(F, 4) * cg) ** (2 / 3)
    total = sum(raw.values())
    for (F, m_F), weight in raw.items():
        assert table.w[row, ground_index(F, m_F) - 1] == pytest.approx(weight / total, rel=1e-12)
    others = [level.index - 1 for level in LEVELS[:N_GROUND] if (level.F, level.m_F) not in raw]
    assert np.all(table.w[row, others] == 0)


def test_branching_table_is_cached_and_read_only(constants):
    table = build_branching_table(constants)
    assert build_branching_table(constants) is table
    with pytest.raises(ValueError):
        table.w[0, 0] = 0.5


def test_m1_weights_respect_selection_rule():
    weights = magnetic_dipole_weights()
    assert np.all(np.diag(weights) == 0)
    for source in LEVELS[:N_GROUND]:
        for target in LEVELS[:N_GROUND]:
            if abs(source.m_F - target.m_F) > 1:
                assert weights[source.index - 1, target.index - 1] == 0


def test_m1_distribution_is_doubly_stochastic():
    m1 = m1_distribution()
    assert np.allclose(m1.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(m1.sum(axis=0), 1.0, atol=1e-10)
    assert np.allclose(m1, m1.T, atol=1e-10)
    assert np.all(np.diag(m1) == 0)


def test_cross_manifold_only_variant():
    m1 = m1_distribution(include_within_manifold=False)
    assert np.allclose(m1.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(m1[:7, :7] == 0)
    assert np.all(m1[7:, 7:] == 0)


def test_kernel_column_sums_equal_decay(constants, fast_relaxation):
    kernel = source_kernel(fast_relaxation, build_branching_table(constants))
    assert np.allclose(kernel.sum(axis=0), decay_vector(fast_relaxation), rtol=1e-12)
    assert np.all(kernel[N_GROUND:] == 0)
    assert np.all(np.diag(kernel) == 0)


def test_uniform_relaxation_feeds_every_other_sublevel():
    config = RelaxationConfig(gamma_p=TWO_PI * 100.0, Gamma=TWO_PI * 1e6, r=1.0)
    rho = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    rho[0, 0] = 1.0
    influx = source_matrix(rho, config)
    assert influx[0] == 0.0
    assert np.allclose(influx[1:N_GROUND], config.gamma_p / 15, rtol=1e-14)
    assert np.all(influx[N_GROUND:] == 0)


def test_source_matrix_conserves_population(fast_relaxation):
    rng = np.random.default_rng(3)
    populations = rng.random(N_LEVELS)
    populations /= populations.sum()
    rho = np.diag(populations).astype(complex)
    influx = source_matrix(rho, fast_relaxation)
    outflux = decay_vector(fast_relaxation) @ populations
    assert influx.sum() == pytest.approx(outflux, rel=1e-12)


def test_source_matrix_rejects_wrong_shape(fast_relaxation):
    with pytest.raises(SolverError):
        source_matrix(np.eye(16), fast_relaxation)
