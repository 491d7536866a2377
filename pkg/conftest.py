"""
Shared fixtures for the test suite
"""
import math

import pytest

from atomic_model import load_constants, reset_cg_table
from coupling import FieldAmplitudes, PolarizationScheme, build_bichromatic_coupling
from relaxation import RelaxationConfig, build_branching_table
from scan import ScanConfig

TWO_PI = 2 * math.pi


@pytest.fixture
def constants():
    return load_constants()


@pytest.fixture
def fast_relaxation():
    """Rates with gamma_p / Gamma = 4e-3, well conditioned for every solver path"""
    return RelaxationConfig(gamma_p=TWO_PI * 20e3, Gamma=TWO_PI * 5e6, r=0.6)


@pytest.fixture
def cell2_relaxation():
    return RelaxationConfig(gamma_p=TWO_PI * 107.0, Gamma=TWO_PI * 0.51e9, r=0.6)


@pytest.fixture
def unit_fields():
    return FieldAmplitudes(1.0, 1.0)


@pytest.fixture
def sigma_minus_coupling(constants):
    return build_bichromatic_coupling(PolarizationScheme.sigma_minus(),
                                      FieldAmplitudes.from_intensities(0.05, 0.05), constants)


@pytest.fixture
def fast_scan_config(fast_relaxation):
    """sigma- - sigma- spectrum over the seven (m,m) resonances at 22.7 uT"""
    return ScanConfig(
        relaxation=fast_relaxation,
        b_tesla=22.7e-6,
        scheme=PolarizationScheme.sigma_minus(),
        tuned_level=4,
        intensity1=0.05,
        intensity2=0.05,
        delta_r_start=-TWO_PI * 600e3,
        delta_r_stop=TWO_PI * 600e3,
        points=121,
        refine_levels=1,
    )


@pytest.fixture(autouse=True)
def clean_cg_table():
    yield
    reset_cg_table()
    build_branching_table.cache_clear()
