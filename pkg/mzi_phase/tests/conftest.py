import math

import numpy as np
import pytest

from ..bayes_core import make_quadrature
from ..optimizer import OptimizerConfig
from ..types import FlatPrior


@pytest.fixture
def rng():
    return np.random.default_rng(20200101)


@pytest.fixture
def full_prior():
    return FlatPrior(center=0.0, width=math.pi)


@pytest.fixture
def full_grid(full_prior):
    return make_quadrature(full_prior)


@pytest.fixture
def quick_cfg():
    """Few restarts so that searches stay fast in unit tests."""
    return OptimizerConfig(restarts=3, max_iterations=4000)
