import numpy as np
import pytest

from frgelab.functionals import FunctionalContext
from frgelab.model import ModelSpec, WindowParams
from frgelab.regulator import make_regulator


@pytest.fixture(scope="session")
def litim():
    return make_regulator("litim")


@pytest.fixture(scope="session")
def exponential():
    return make_regulator("exponential")


@pytest.fixture(scope="session")
def phi4_spec():
    """Single-mode anharmonic benchmark: unit mass, full window, c4 = 0.1."""
    return ModelSpec(
        dimension=0, modes=1, mass=1.0,
        window=WindowParams(kind="scalar", r=1.0), c4=0.1,
    )


@pytest.fixture(scope="session")
def phi4_ctx(phi4_spec, litim):
    return FunctionalContext(spec=phi4_spec, regulator=litim)


@pytest.fixture(scope="session")
def free_spec():
    return ModelSpec(
        dimension=0, modes=1, mass=1.0,
        window=WindowParams(kind="scalar", r=0.7), c4=0.0,
    )


@pytest.fixture(scope="session")
def line_spec():
    """Three-mode d=1 theory with an identity window."""
    return ModelSpec(
        dimension=1, modes=3, mass=1.0, momentum_spacing=1.0,
        window=WindowParams(kind="identity"), c4=0.05,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(987654321)
