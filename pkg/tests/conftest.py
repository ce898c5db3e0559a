from __future__ import annotations

import numpy as np
import pytest

from fokker.minkowski import SystemParams
from fokker.solver import BoundaryConditions


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical check")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def free_params():
    return SystemParams(1.0, 1.0, 0.0, 0.0, c=1.0, hbar=0.05, D=0.5, eta=0.25)


@pytest.fixture
def charged_params():
    return SystemParams(1.0, 1.0, 0.0316, 0.0316, c=1.0, hbar=0.05, D=0.5, eta=0.25)


@pytest.fixture
def small_bc():
    """Two nearly parallel timelike chords with N = 2 segments each."""
    return BoundaryConditions([0.0, 0.0], [2.0, 0.1], [0.0, 1.0], [2.0, 1.05], 2.0, 2.0, 2, 2)
