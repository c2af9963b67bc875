import numpy as np
import pytest

from pbdisk.assembly import build_expansion
from pbdisk.fields import PeriodicField


@pytest.fixture(scope="session")
def cos_wall():
    return PeriodicField.from_modes([(1, 1.0, 0.0)], 64)


@pytest.fixture(scope="session")
def stack(cos_wall):
    """Order-2 stack for α = 1, η = 0.05, f = cos θ on the default grids."""
    return build_expansion(1.0, 0.05, cos_wall, order=2)


@pytest.fixture(scope="session")
def rigid_stack():
    f = PeriodicField(np.zeros(16))
    return build_expansion(1.3, 0.0, f, order=2, n_y=201)
