import numpy as np
import pytest

from corvet.models.fxp import FxPFormat
from corvet.models.memory import Topology
from corvet.services.fixture_service import FixtureService

Q8_4 = FxPFormat(total_bits=8, frac_bits=4)
FXP8 = FxPFormat.default(8)
FXP16 = FxPFormat.default(16)
FXP16_F12 = FxPFormat(total_bits=16, frac_bits=12)

DIGITS_TOPOLOGY = Topology(N=[64, 32, 32, 10], J=[196, 64, 32, 32])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_topology():
    return Topology(N=[4, 2], J=[3, 4])


@pytest.fixture(scope="session")
def digits():
    """(model, train, test) of the desk-scale digit fixture."""
    return FixtureService.build(2000, 600, seed=0)


@pytest.fixture(scope="session")
def small_digits():
    return FixtureService.build(300, 40, seed=7)
