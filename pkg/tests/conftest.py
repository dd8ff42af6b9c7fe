import numpy as np
import pytest

from genrec.generator import preset, random_weights
from genrec.tensor_core import SeededRng


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_weights():
    return random_weights(preset("tiny"), SeededRng(3))


@pytest.fixture
def tiny16_weights():
    return random_weights(preset("tiny16"), SeededRng(3))
