import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from zvonkinlab.coefficients import CoefficientSet
from zvonkinlab.grid import UniformGrid

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def grid1d():
    return UniformGrid(1, 0.0, 1.0, 50, 6.0, 121)


@pytest.fixture
def brownian_coeffs():
    return CoefficientSet(1, None, 1.0, 1.0, 1.0, tag="bm")


@pytest.fixture
def smooth_sigma_coeffs():
    return CoefficientSet(1, None, lambda t, x: (2.0 + np.sin(x[..., 0]))[..., None, None], 1.0, 9.0,
                          tag="2+sin")
