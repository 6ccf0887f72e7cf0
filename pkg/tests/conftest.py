import logging

import numpy as np
import pytest

from tvflow import build_uniform_mesh


@pytest.fixture(autouse=True)
def _quiet_solver_warnings():
    logging.getLogger("tvflow").setLevel(logging.ERROR)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_interval_2():
    return build_uniform_mesh([(0.0, 1.0)], 2, "interval")


@pytest.fixture
def unit_quad():
    return build_uniform_mesh([(0.0, 1.0), (0.0, 1.0)], (1, 1), "quad")
