import numpy as np
import pytest

import fpinv
from fpinv import bench


@pytest.fixture(scope="session")
def default_schedule():
    return fpinv.build_linear_schedule(1000, 8.5e-4, 1.2e-2, 50)


@pytest.fixture(scope="session")
def tiny_schedule():
    # Constant beta = 0.1 over three steps: alpha_bars 0.9, 0.81, 0.729.
    return fpinv.build_linear_schedule(3, 0.1, 0.1, 3)


@pytest.fixture(scope="session")
def halving_schedule():
    # Constant beta = 0.5 over two steps: alpha_bars 0.5 and 0.25.
    return fpinv.build_linear_schedule(2, 0.5, 0.5, 2)


@pytest.fixture(scope="session")
def default_model():
    cfg = bench.default_config()
    return fpinv.GaussianMixtureDenoiser(cfg.mixture, cfg.schedule.build())


@pytest.fixture(scope="session")
def clustered_model():
    cfg = bench.clustered_config()
    return fpinv.GaussianMixtureDenoiser(cfg.mixture, cfg.schedule.build())


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
