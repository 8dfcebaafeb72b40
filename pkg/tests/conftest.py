import numpy as np
import pytest

from fsq.kernels import available_backends


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(available_backends()))
def backend(request):
    """Each kernel implementation that can be imported here."""
    return available_backends()[request.param]
