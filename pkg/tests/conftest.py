import math
import warnings

import numpy as np
import pytest

from ratpress.maps import MapSpec
from ratpress.pressure import PressureConfig, assemble_pressure

LN2 = math.log(2)


def grid(a, b, h):
    k = int(round((b - a) / h))
    return np.round(a + h * np.arange(k + 1), 10)


# curves are expensive (a few seconds each); build each once per session
_CURVES = {
    "z2": (0, grid(-2, 3, 0.25), dict(depth=18)),
    "cheb": (-2, grid(-3, 2, 0.1), {}),
    "c01": (0.1, grid(-3, 3, 0.1), {}),
    "zi": (1j, grid(-1, 3, 0.1), {}),
}
_cache = {}


@pytest.fixture(scope="session")
def curve():
    def get(name):
        if name not in _cache:
            c, g, kw = _CURVES[name]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                _cache[name] = assemble_pressure(MapSpec.quadratic(c), g, PressureConfig(**kw))
        return _cache[name]
    return get


@pytest.fixture
def z2():
    return MapSpec.quadratic(0)


@pytest.fixture
def cheb():
    return MapSpec.quadratic(-2)


@pytest.fixture
def c01():
    return MapSpec.quadratic(0.1)


@pytest.fixture
def zi():
    return MapSpec.quadratic(1j)
