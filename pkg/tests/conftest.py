import numpy as np
import pytest

from condbm import kernels


@pytest.fixture(params=["python", "cython"] if kernels.BACKEND == "cython" else ["python"])
def backend(request):
    return request.param


def rayleigh_cdf(scale=1.0):
    return lambda z: 1.0 - np.exp(-np.square(z) / (2.0 * scale * scale))
