import numpy as np
import pytest

from facestyle.synthetic import write_fixture


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def identity_fixture(tmp_path_factory):
    """1000x1320 synthetic portrait whose collection is the portrait itself."""
    return write_fixture(tmp_path_factory.mktemp("identity"), include_input=True)


@pytest.fixture(scope="session")
def collection_fixture(tmp_path_factory):
    """1000x1320 synthetic portrait plus three styled synthetic exemplars."""
    return write_fixture(tmp_path_factory.mktemp("collection"), n_exemplars=3)
