import numpy as np
import pytest

from loopforms.geometry import FlatTorus, Sphere


@pytest.fixture(scope="session")
def sphere():
    return Sphere()


@pytest.fixture(scope="session")
def torus():
    return FlatTorus()


@pytest.fixture(params=["s2", "t2"])
def manifold(request, sphere, torus):
    return sphere if request.param == "s2" else torus


@pytest.fixture
def rng():
    return np.random.default_rng(20250811)
