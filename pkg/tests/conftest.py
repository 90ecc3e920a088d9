import numpy as np
import pytest

from coptraj.config import default_config
from coptraj.controller import ControllerGains
from coptraj.quadrotor import QuadrotorConstants, RotorParams


@pytest.fixture
def params():
    return RotorParams(3.375e-4, 0.016)


@pytest.fixture
def constants():
    return QuadrotorConstants()


@pytest.fixture
def gains():
    return ControllerGains()


def desk_config():
    """Reduced-scale configuration shared by the slower integration tests."""
    cfg = default_config()
    cfg.trajectory.duration = 10.0
    cfg.trajectory.n_pieces = 3
    cfg.integration.fixed_step = 2e-3
    cfg.sensitivity.step = 1e-2
    cfg.observability.segments = 20
    cfg.optimizer.evals_per_stage = 150
    return cfg


def tiny_config():
    """Smallest configuration that still exercises every pipeline stage."""
    cfg = default_config()
    cfg.trajectory.duration = 6.0
    cfg.trajectory.n_pieces = 2
    cfg.integration.fixed_step = 2e-3
    cfg.sensitivity.step = 1e-2
    cfg.observability.segments = 8
    cfg.optimizer.evals_per_stage = 25
    cfg.campaign.flights = 4
    return cfg


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
