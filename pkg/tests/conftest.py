import numpy as np
import pytest

from hvisolve.contact import default_contact_data, make_contact_instance
from hvisolve.mesh import build_fespace, build_rect_mesh


@pytest.fixture(scope="session")
def data():
    return default_contact_data()


@pytest.fixture(scope="session")
def small_space():
    return build_fespace(build_rect_mesh(2.0, 1.0, 8, 4))


@pytest.fixture(scope="session")
def small_instance(data, small_space):
    return make_contact_instance(small_space, data)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
