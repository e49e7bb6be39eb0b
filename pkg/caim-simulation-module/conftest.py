import os
import sys

import numpy as np
import pytest

# modules are imported by bare name, as the scripts do
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from ising import IsingProblem  # noqa: E402


@pytest.fixture
def antiferro_pair():
    return IsingProblem([[0.0, 1.0], [1.0, 0.0]], [0.0, 0.0])


@pytest.fixture
def single_free_spin():
    return IsingProblem([[0.0]], [0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
