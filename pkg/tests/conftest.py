import numpy as np
import pytest

from fanstudy.loaders import build_dataset
from fanstudy.synthetic import SyntheticSpec, build_synthetic


def regularized(data):
    """Minute dataset of a SyntheticData object on its common grid."""
    return build_dataset(data.minute.bars, data.minute.events)


@pytest.fixture(scope="session")
def null_data():
    return build_synthetic(SyntheticSpec())


@pytest.fixture(scope="session")
def null_dataset(null_data):
    return regularized(null_data)


@pytest.fixture(scope="session")
def shock_dataset():
    return regularized(build_synthetic(SyntheticSpec(shocks={"second_half": 5.0}, daily=False)))


@pytest.fixture
def rng():
    return np.random.default_rng(20221120)
