import numpy as np
import pytest

from quditpulse import ManifoldStructure, PhysicalParams


@pytest.fixture(scope="session")
def cs_params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def cs_manifold(cs_params):
    return cs_params.manifold


@pytest.fixture(scope="session")
def toy_params():
    """d = 8 instance (2I = 3): fast brute-force test bed."""
    return PhysicalParams(manifold=ManifoldStructure(3))


def random_hermitian(dim, rng):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return a + a.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
