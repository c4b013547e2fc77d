"""Shared fixtures: the two-resonator gate point and the entangled-coherent-state point."""
import logging

import numpy as np
import pytest

from app.core.device import DeviceParams, solve_gate_parameters
from app.core.logging_util import teardown_logging
from app.core.operators import HilbertSpace


@pytest.fixture
def space() -> HilbertSpace:
    return HilbertSpace(4, 4)


@pytest.fixture
def gate_params() -> DeviceParams:
    """δ_b = 0.7 GHz with μ solved from the gate relations (k = 1), lossless."""

    mu = solve_gate_parameters(50.0, -0.3, 0.7).mu_mhz
    return DeviceParams(omega_a=3.5, omega_b=6.5, delta_a=-0.3, delta_b=0.7, g=50.0, mu=mu, g_ab=5.0).validate()


@pytest.fixture
def lossy_gate_params(gate_params: DeviceParams) -> DeviceParams:
    return gate_params.with_decoherence(10.0, 20.0)


@pytest.fixture
def cat_params() -> DeviceParams:
    return DeviceParams(omega_a=3.5, omega_b=6.5, delta_a=-1.0, delta_b=1.696, g=150.0, mu=200.0, g_ab=15.0).validate()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _detach_file_logging():
    yield
    teardown_logging()
    logging.getLogger("qutrit_kerr").setLevel(logging.WARNING)
