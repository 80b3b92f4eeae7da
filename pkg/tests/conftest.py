import numpy as np
import pytest

from htprox.rng import RngStream
from htprox.targets import GeneralizedCauchy


@pytest.fixture
def gen() -> np.random.Generator:
    return RngStream(seed=12345).generator()


@pytest.fixture
def cauchy_1d() -> GeneralizedCauchy:
    return GeneralizedCauchy(1, 2.0)


@pytest.fixture
def cauchy_3d() -> GeneralizedCauchy:
    return GeneralizedCauchy(3, 1.0)
