import numpy as np
import pytest

from coherentsets import (
    ConstantFlow,
    FpConfig,
    QuadrupleGyre,
    RealField,
    SpectralField,
    assemble_transfer,
    forward,
    inverse,
    make_grid,
)

@pytest.fixture(scope="session")
def quad_gyre():
    return QuadrupleGyre()


@pytest.fixture(scope="session")
def grid_2d():
    return make_grid(2, 5, 15, [2.0, 2.0])


@pytest.fixture(scope="session")
def zero_flow_2d():
    return ConstantFlow((0.0, 0.0), (2.0, 2.0))


@pytest.fixture(scope="session")
def benchmark_fp_config():
    return FpConfig(epsilon=0.02, t0=0.0, t1=10.25, steps=50)


@pytest.fixture(scope="session")
def quad_tm(grid_2d, quad_gyre, benchmark_fp_config):
    """Transfer matrix of the benchmark gyre run, shared across tests."""
    return assemble_transfer(grid_2d, quad_gyre, benchmark_fp_config)


def random_bandlimited_field(grid, seed=0) -> RealField:
    """Random real field lying exactly in the truncated basis."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(grid.coeff_shape()) + 1j * rng.standard_normal(grid.coeff_shape())
    vals = inverse(SpectralField(grid, c), grid.M).real
    return RealField(grid, vals)


def spectral_from_real(grid, seed=0) -> SpectralField:
    return forward(random_bandlimited_field(grid, seed))
