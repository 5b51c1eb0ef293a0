import numpy as np
import pytest

from taxa import tensor as T


@pytest.fixture(autouse=True)
def _f64_default():
    """Unit tests run in 64-bit unless they opt into something else."""
    old = T.get_precision()
    T.set_precision("f64")
    yield
    T.set_precision(old)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
